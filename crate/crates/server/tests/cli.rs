use std::io::{BufRead, BufReader, Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn flipper() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flipper"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn run_sorting_program() {
    let out = flipper()
        .args(["run", "--strict-exit", "--world"])
        .arg(data("worlds/sorting.json"))
        .arg("--program")
        .arg(data("programs/sort_by_color.flip"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let w: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rooms = &w["named_areas"];
    for it in w["items"].as_array().unwrap() {
        let room = match it["color"].as_str().unwrap() {
            "red" => "room1",
            "green" => "room2",
            "blue" => "room3",
            _ => "room4",
        };
        let at = serde_json::json!([it["x"], it["y"]]);
        assert!(rooms[room].as_array().unwrap().contains(&at), "{it}");
    }
}

#[test]
fn strict_exit_reflects_warnings() {
    let prog = data("programs/strict_unrealizable.flip");
    let base = || {
        let mut c = flipper();
        c.args(["run", "--world"]).arg(data("worlds/fig1.json")).arg("--program").arg(&prog);
        c
    };
    let out = base().arg("--strict-exit").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let w: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(w["robot"]["x"], 3);
    assert_eq!(base().output().unwrap().status.code(), Some(0));
}

#[test]
fn unparsable_program_fails() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.flip");
    std::fs::write(&p, "visit red triangle").unwrap();
    let out = flipper().args(["run", "--world"]).arg(data("worlds/fig1.json")).arg("--program").arg(&p).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repl_session() {
    let mut child = flipper()
        .args(["repl", "--world"])
        .arg(data("worlds/fig1.json"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let script = "visit red triangle\n:define visit red triangle := move right\nvisit blue circle\n:choose 0\n:world\n:quit\n";
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let mut out = String::new();
    child.stdout.take().unwrap().read_to_string(&mut out).unwrap();
    assert!(child.wait().unwrap().success());
    assert!(out.contains("not understood"), "{out}");
    assert!(out.contains("definition generalized to: visit world containing item is red and is triangle"), "{out}");
    assert!(out.contains("robot at [8, 4]"), "{out}");
}

#[test]
fn serve_answers_http() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("worlds")).unwrap();
    std::fs::copy(data("worlds/fig1.json"), dir.path().join("worlds/fig1.json")).unwrap();
    let mut child = flipper()
        .args(["serve", "--port", "0", "--data"])
        .arg(dir.path())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap().to_string();

    let body = r#"{"world_id":"fig1","user":"ann"}"#;
    let mut s = std::net::TcpStream::connect(&addr).unwrap();
    write!(
        s,
        "POST /api/session HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"session_id\":\"s1\""), "{resp}");
    assert!(dir.path().join("sessions/s1.jsonl").exists());
}
