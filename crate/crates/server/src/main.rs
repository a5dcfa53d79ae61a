use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use flipper_core::exec::{execute, Trace};
use flipper_core::genz::EmbeddingTable;
use flipper_core::lang::{words, GrammarRule};
use flipper_core::semparse::parse_text;
use flipper_core::session::{Engine, UtteranceResult};
use flipper_core::store::{RuleFilter, Store};
use flipper_core::world::GridWorld;

#[derive(Parser)]
#[command(name = "flipper", version, about = "Naturalizing task language for a grid-world robot")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the HTTP/WebSocket API.
    Serve {
        #[arg(long, env = "PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "DATA_DIR", default_value = "flipper-data")]
        data: PathBuf,
        /// Word vectors ("word v1 … v100" per line); the bundled table is used otherwise.
        #[arg(long, env = "EMBEDDINGS")]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Execute a program file on a world and print the final world as JSON.
    Run {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        program: PathBuf,
        /// Exit with status 1 if execution produced warnings.
        #[arg(long)]
        strict_exit: bool,
        /// Data directory whose induced rules are also available.
        #[arg(long, env = "DATA_DIR")]
        data: Option<PathBuf>,
        #[arg(long, default_value = "cli")]
        user: String,
    },
    /// Interactive loop on stdin.
    Repl {
        #[arg(long)]
        world: PathBuf,
        #[arg(long, env = "DATA_DIR")]
        data: Option<PathBuf>,
        #[arg(long, env = "EMBEDDINGS")]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value = "repl")]
        user: String,
    },
}

fn embeddings(path: Option<PathBuf>) -> Result<Arc<EmbeddingTable>, String> {
    match path {
        Some(p) => EmbeddingTable::load(&p, None).map(Arc::new).map_err(|e| e.to_string()),
        None => Ok(Arc::new(EmbeddingTable::bundled().clone())),
    }
}

fn open_store(data: Option<PathBuf>) -> Result<Store, String> {
    match data {
        Some(d) => Store::open(d).map_err(|e| e.to_string()),
        None => Ok(Store::in_memory()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Serve {
            port,
            data,
            embeddings: emb,
            host,
        } => serve(&host, port, data, emb),
        Cmd::Run {
            world,
            program,
            strict_exit,
            data,
            user,
        } => run(&world, &program, strict_exit, data, &user),
        Cmd::Repl {
            world,
            data,
            embeddings: emb,
            user,
        } => repl(&world, data, emb, &user),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn serve(host: &str, port: u16, data: PathBuf, emb: Option<PathBuf>) -> Result<ExitCode, String> {
    let store = Store::open(&data).map_err(|e| e.to_string())?;
    let engine = Engine::new(store, Some(embeddings(emb)?));
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await.map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        axum::serve(listener, flipper_server::router(flipper_server::AppState::new(engine)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn run(world: &PathBuf, program: &PathBuf, strict_exit: bool, data: Option<PathBuf>, user: &str) -> Result<ExitCode, String> {
    let w = GridWorld::load(world).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(program).map_err(|e| format!("{}: {e}", program.display()))?;
    let engine = Engine::new(open_store(data)?, None);
    let g = engine.grammar_for(&w);
    let cands = parse_text(&text, &words(&text), user, &g, engine.store().params()).map_err(|e| e.to_string())?;
    let out = execute(&cands[0].program, &w);
    print_warnings(&out.trace);
    println!("{}", serde_json::to_string_pretty(&out.world).expect("serializes"));
    Ok(if strict_exit && !out.trace.warnings.is_empty() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn print_warnings(t: &Trace) {
    for w in &t.warnings {
        eprintln!("warning at {}: {}", w.path, w.reason);
    }
}

const REPL_HELP: &str = "commands:
  <utterance>                 preview interpretations
  :choose N                   commit candidate N
  :define <utterance> := <definition>
  :rules                      list induced rules
  :delete <rule id>           delete one of your rules
  :world                      print the world as JSON
  :quit";

fn repl(world: &PathBuf, data: Option<PathBuf>, emb: Option<PathBuf>, user: &str) -> Result<ExitCode, String> {
    let w = GridWorld::load(world).map_err(|e| e.to_string())?;
    let mut engine = Engine::new(open_store(data)?, Some(embeddings(emb)?));
    let wid = engine.store_mut().put_world(&w).map_err(|e| e.to_string())?;
    let (sid, _) = engine.open_session(user, &wid).map_err(|e| e.to_string())?;
    println!("{REPL_HELP}");
    let stdin = std::io::stdin();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line == ":quit" {
            break;
        }
        if let Err(e) = repl_line(&mut engine, &sid, user, line) {
            println!("error: {e}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn repl_line(engine: &mut Engine, sid: &str, user: &str, line: &str) -> Result<(), String> {
    if let Some(n) = line.strip_prefix(":choose") {
        let n: usize = n.trim().parse().map_err(|_| "expected a candidate number".to_string())?;
        let r = engine.choose(sid, n, None).map_err(|e| e.to_string())?;
        print_warnings(&r.trace);
        let p = r.world.robot.position;
        println!("ok: {} steps; robot at [{}, {}]", r.trace.steps.len(), p.x, p.y);
    } else if let Some(rest) = line.strip_prefix(":define") {
        let (x, y) = rest.split_once(":=").ok_or_else(|| "usage: :define <utterance> := <definition>".to_string())?;
        let r = engine.define(sid, x.trim(), y.trim()).map_err(|e| e.to_string())?;
        if r.generalized {
            println!("definition generalized to: {}", r.generalized_from);
        }
        print_rules(&r.induced_rules);
    } else if line == ":rules" {
        print_rules(&engine.list_rules(&RuleFilter::default()));
    } else if let Some(id) = line.strip_prefix(":delete") {
        engine.delete_rule(id.trim(), user).map_err(|e| e.to_string())?;
        println!("deleted {}", id.trim());
    } else if line == ":world" {
        let w = &engine.session(sid).map_err(|e| e.to_string())?.world;
        println!("{}", serde_json::to_string(w).expect("serializes"));
    } else if line.starts_with(':') {
        println!("{REPL_HELP}");
    } else {
        match engine.utterance(sid, line).map_err(|e| e.to_string())? {
            UtteranceResult::Ok { candidates } => {
                for c in candidates {
                    let warn = if c.trace.warnings.is_empty() { "" } else { " (with warnings)" };
                    println!("[{}] {:.3} {} ({} steps){warn}", c.id, c.prob, c.program_text, c.trace.steps.len());
                }
            }
            UtteranceResult::Unparsable { error } => {
                println!("not understood: {error}");
                println!("teach it with :define {line} := <definition>");
            }
        }
    }
    Ok(())
}

fn print_rules(rules: &[GrammarRule]) {
    for r in rules {
        println!("{} [{}] {}", r.id, r.author, r);
    }
}
