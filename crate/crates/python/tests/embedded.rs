use std::ffi::CString;

use flipper::flipper as flipper_module;
use pyo3::prelude::*;

#[test]
fn module_round_trip_in_embedded_interpreter() {
    pyo3::append_to_inittab!(flipper_module);
    let fig1 = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/worlds/fig1.json");
    let code = CString::new(format!(
        r#"
import flipper
w = flipper.World.load({fig1:?})
assert w.robot == (3, 0)
trace, after = w.execute("move right; pick item")
assert [s["op"] for s in trace["steps"]] == ["move", "pick"]
assert after.holding == ["t1"]
assert flipper.canonical("repeat   3 times pick item") == "repeat 3 times pick item"
e = flipper.Engine()
e.add_world("fig1", w)
sid = e.open_session("ann", "fig1")
assert e.utterance(sid, "pick 3 items")["status"] == "unparsable"
try:
    e.open_session("ann", "missing")
    raise AssertionError("expected KeyError")
except KeyError:
    pass
"#
    ))
    .unwrap();
    Python::attach(|py| {
        py.run(&code, None, None).unwrap();
    });
}
