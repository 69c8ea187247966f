//! Serves a run suspended at cluster selection, then plays the operator:
//! lists clusters, posts a selection and fetches the resulting plan.
//!
//! ```bash
//! cargo run --example session_server
//! ```

use std::io::{Read, Write};
use std::net::TcpStream;

use inspection_path::clustering::{ClusterSelection, SelectionPolicy};
use inspection_path::config::PipelineConfig;
use inspection_path::pipeline::{run, SourceSpec};
use inspection_path::server::{serve, AppState, DEFAULT_CLUSTER_POINT_CAP};
use inspection_path::synth::scenes;

fn request(addr: &str, method: &str, path: &str, body: &str) -> String {
    let mut s = TcpStream::connect(addr).expect("server is listening");
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .expect("request written");
    let mut reply = String::new();
    s.read_to_string(&mut reply).expect("reply read");
    reply
}

fn body(reply: &str) -> &str {
    reply.split("\r\n\r\n").nth(1).unwrap_or("")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let root = tmp.path();
    let spec = SourceSpec::Scene {
        scene: scenes::two_objects(),
        seed: 0,
    };
    let config = PipelineConfig {
        s: 3,
        cluster_selection: ClusterSelection::Policy(SelectionPolicy::Interactive),
        ..PipelineConfig::default()
    };
    let dir = root.join("run-0001");
    run(spec.open()?.as_mut(), &config, Some(spec), &dir)?;

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let addr = listener.local_addr()?.to_string();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let server = rt.spawn(serve(listener, AppState::new(root, DEFAULT_CLUSTER_POINT_CAP), async {
        stopped.await.ok();
    }));

    let clusters: serde_json::Value = serde_json::from_str(body(&request(&addr, "GET", "/api/session/0001/clusters", "")))?;
    for s in clusters["summaries"].as_array().into_iter().flatten() {
        println!("cluster {} with {} points", s["id"], s["count"]);
    }
    let reply = request(&addr, "POST", "/api/session/0001/selection", r#"{"ids":[0]}"#);
    println!("selection: {}", reply.lines().next().unwrap_or(""));
    let accepted: serde_json::Value = serde_json::from_str(body(&reply))?;
    let plan_path = accepted["plan"].as_str().unwrap_or("/api/session/0001/plan");
    let plan: serde_json::Value = serde_json::from_str(body(&request(&addr, "GET", plan_path, "")))?;
    println!("plan version {} has {} targets", accepted["version"], plan["targets"].as_array().map_or(0, Vec::len));

    stop.send(()).ok();
    rt.block_on(server)??;
    Ok(())
}

