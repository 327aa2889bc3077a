//! Starts the HTTP service on the default address (or the one given).
//!
//! ```text
//! cargo run --example serve -- 127.0.0.1:8787
//! curl -s localhost:8787/api/concepts
//! curl -s localhost:8787/api/generate -d '{"objects": [{"concept": "dog", "bbox": [0, 0, 0.5, 1]}], "seed": 3}'
//! ```

use layout_guidance::generator::ConceptVocabulary;
use layout_guidance::service::{serve, DEFAULT_LISTEN};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let listen = std::env::args()
        .nth(1)
        .unwrap_or_else(|| DEFAULT_LISTEN.to_string());
    serve(&listen, ConceptVocabulary::toy(), None).await
}
