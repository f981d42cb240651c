//! Regenerates the mock-provider fixtures under `fixtures/corpus`.
//!
//! Runs the real pipeline against a scripted provider and records every
//! response, keyed exactly as the mock provider will look it up:
//!
//! ```text
//! cargo run -p fd-service --example seed_corpus -- fixtures
//! ```

use std::path::PathBuf;
use std::sync::Arc;

use fd_core::gateway::MockCorpus;
use fd_core::images::MockCatalog;
use fd_core::job::{JobState, SubmitJob};
use fd_core::testkit::{CorpusRecorder, ScriptedProvider};
use fd_service::{Providers, Service, ServiceConfig};

pub const THEME: &str = "Personal portfolio for a wildlife photographer";

const PRD: &str = "\
## Overview
A portfolio for a wildlife photographer who works in mountain and forest habitats. \
The site sells prints and takes commission requests. Tone: quiet, patient, cinematic.

## Layout
Sticky top bar with the name on the left and Gallery, About and Contact links on the right. \
A full-width hero, a three-card featured series row, and a contact form in the footer, \
following the boxes of the sketch top to bottom.

## Sections
- Hero: [snow leopard(large)] behind the headline \"Waiting for the mountains to move\" \
and a \"View gallery\" button.
- Featured series: three cards, each with a round thumbnail and a caption: \
[red fox(medium)] \"Forest edges\", [mountain lake(Large)] \"Still water\", [owl(small)] \"Night shift\".
- About: [photographer portrait(small)] next to a short biography and a link to the \
[field journal](https://example.com/journal).
- Gear strip: [camera gear(small)] with a one-line kit list.

## Visual Style
Charcoal background (#1f2326), bone white text (#f2efe9), moss green accents (#6b8f71). \
Serif headings, sans-serif body, generous spacing.

## Imagery
Full-bleed photography only, no illustration. Repeat the fox in the footer: [red fox(medium)].

## Functionality
Smooth scrolling navigation, a lightbox for gallery images, and a contact form with \
name, email and message fields that validates before sending.
";

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let corpus_dir = root.join("corpus");
    std::fs::create_dir_all(&corpus_dir)?;
    for entry in std::fs::read_dir(&corpus_dir)? {
        std::fs::remove_file(entry?.path())?;
    }

    let sketch: fd_core::sketch::SketchDocument = serde_json::from_str(&std::fs::read_to_string(root.join("sketches/landing.json"))?)?;
    let catalog = MockCatalog::load(&root.join("catalog.json"))?;
    let recorder = CorpusRecorder::new(Arc::new(ScriptedProvider::new(PRD)), MockCorpus::new(&corpus_dir));
    let providers = Providers {
        llm: Arc::new(recorder),
        images: Arc::new(catalog),
    };

    let data = std::env::temp_dir().join(format!("fd-seed-{}", std::process::id()));
    let service = Service::start(ServiceConfig::new(&data), providers).await?;
    let mut ids = Vec::new();
    for iterations in [4, 0] {
        ids.push(
            service
                .submit(SubmitJob {
                    sketch: Some(sketch.clone()),
                    svg: None,
                    theme: THEME.into(),
                    iterations: Some(iterations),
                    allow_empty_sketch: false,
                })
                .await
                .map_err(|e| format!("{e:?}"))?,
        );
    }
    for id in ids {
        let job = service.job(&id).await.expect("submitted");
        let mut rx = job.subscribe();
        while !job.state().await.is_terminal() {
            rx.changed().await?;
        }
        let state = job.state().await;
        println!("job {id}: {state}");
        if state != JobState::Completed {
            return Err(format!("seeding run ended in {state}").into());
        }
    }
    std::fs::remove_dir_all(&data)?;
    let count = std::fs::read_dir(&corpus_dir)?.count();
    println!("wrote {count} fixtures to {}", corpus_dir.display());
    Ok(())
}
