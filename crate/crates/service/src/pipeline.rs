//! Runs one job through its stages. Each artifact is written before the
//! commit that announces it.

use std::io;
use std::sync::Arc;

use async_trait::async_trait;
use fd_core::codegen::{run_refinement_loop, LoopObserver, LoopOptions, RefinementSuggestions, WebsiteVersion};
use fd_core::images::{size_to_query, substitute, ImageResolver, Resolution};
use fd_core::job::{JobState, SubmitJob};
use fd_core::prd::{generate_prd, parse_image_descriptors, ThemePrompt};
use fd_core::sketch::{check_svg, rasterize, rasterizer_config, serialize_svg};

use crate::jobs::{blocking, version_path, Change, JobHandle};
use crate::manifest::{hash_artifacts, ArtifactManifest, ProviderIds};
use crate::store::{INPUT_FILE, MANIFEST_FILE};
use crate::Shared;

async fn write(job: &JobHandle, rel: &str, bytes: Vec<u8>) -> Result<(), String> {
    let dir = job.dir().clone();
    let rel_owned = rel.to_string();
    blocking(move || dir.write_atomic(&rel_owned, &bytes))
        .await
        .map_err(|e| format!("cannot write {rel}: {e}"))
}

async fn commit(job: &JobHandle, changes: Vec<Change>) -> Result<(), String> {
    job.commit(changes).await.map_err(|e| e.to_string())
}

struct Finished {
    state: JobState,
    detail: Option<String>,
}

pub(crate) async fn run_job(shared: Arc<Shared>, job: Arc<JobHandle>) {
    tracing::info!(job = %job.id, "job started");
    let finished = match execute(&shared, &job).await {
        Ok(f) => f,
        Err(detail) => Finished {
            state: JobState::Failed(job.state().await.stage_name()),
            detail: Some(detail),
        },
    };
    tracing::info!(job = %job.id, state = %finished.state, detail = ?finished.detail, "job finished");
    if let Err(e) = finish(&shared, &job, finished.state, finished.detail).await {
        tracing::error!(job = %job.id, error = %e, "cannot record terminal state");
    }
}

/// Writes the manifest, then commits the terminal transition.
pub(crate) async fn finish(shared: &Shared, job: &JobHandle, state: JobState, detail: Option<String>) -> io::Result<()> {
    let snapshot = job.snapshot().await;
    let dir = job.dir().clone();
    let manifest = ArtifactManifest {
        job_id: job.id.clone(),
        outcome: state.clone(),
        iterations: snapshot.iterations,
        merge_mode: shared.config.merge_mode,
        rasterizer: rasterizer_config(shared.config.jpeg_quality),
        providers: ProviderIds {
            llm: shared.providers.llm.provider_id(),
            images: shared.providers.images.provider_id(),
        },
        files: Vec::new(),
        lineage: snapshot.versions.iter().map(Into::into).collect(),
    };
    blocking(move || {
        let manifest = ArtifactManifest {
            files: hash_artifacts(&dir)?,
            ..manifest
        };
        dir.write_json(MANIFEST_FILE, &manifest)
    })
    .await?;
    job.commit(vec![Change::End(state, detail)]).await
}

async fn execute(shared: &Shared, job: &JobHandle) -> Result<Finished, String> {
    let dir = job.dir().clone();
    let input: SubmitJob = blocking(move || dir.read_json(INPUT_FILE))
        .await
        .map_err(|e| format!("cannot read job input: {e}"))?;
    let iterations = job.snapshot().await.iterations;
    let theme = ThemePrompt::new(input.theme.clone()).map_err(|e| e.to_string())?;
    let llm = shared.providers.llm.as_ref();

    // Sketch -> SVG -> JPG.
    commit(job, vec![Change::State(JobState::Rasterizing)]).await?;
    let svg = match (&input.sketch, &input.svg) {
        (Some(doc), None) => serialize_svg(doc).map_err(|e| e.to_string())?,
        (None, Some(text)) => check_svg(text).map_err(|e| e.to_string())?.0,
        _ => return Err("input must hold exactly one of sketch and svg".into()),
    };
    write(job, "sketch.svg", svg.as_str().as_bytes().to_vec()).await?;
    let quality = shared.config.jpeg_quality;
    let raster = tokio::task::spawn_blocking(move || rasterize(&svg, quality))
        .await
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    write(job, "sketch.jpg", raster.bytes.clone()).await?;

    // Requirements document.
    commit(job, vec![Change::State(JobState::WritingPrd)]).await?;
    let outcome = generate_prd(llm, &raster, &theme).await.map_err(|e| e.to_string())?;
    write(job, "prd.md", outcome.prd.text.clone().into_bytes()).await?;
    let mut changes: Vec<Change> = outcome.warnings.into_iter().map(Change::Warning).collect();

    // Image descriptors -> URLs.
    changes.push(Change::State(JobState::ResolvingImages));
    commit(job, changes).await?;
    let prd = outcome.prd;
    let queries: Vec<_> = prd.descriptors.iter().map(size_to_query).collect();
    let mut resolver = ImageResolver::new(shared.providers.images.as_ref());
    let images = resolver.resolve(&queries).await.map_err(|e| e.to_string())?;
    let resolutions: Vec<Resolution> = prd
        .descriptors
        .iter()
        .cloned()
        .zip(images)
        .map(|(descriptor, image)| Resolution { descriptor, image })
        .collect();
    let resolved = substitute(&prd, resolutions).map_err(|e| e.to_string())?;
    let survivors = parse_image_descriptors(&resolved.text).len();
    if survivors > 0 {
        return Err(format!("{survivors} image descriptors survived substitution"));
    }
    write(job, "prd.resolved.md", resolved.text.clone().into_bytes()).await?;
    let resolutions_json = serde_json::to_vec_pretty(&resolved.resolutions).map_err(|e| e.to_string())?;
    write(job, "resolutions.json", resolutions_json).await?;
    let mut changes: Vec<Change> = resolver.into_warnings().into_iter().map(Change::Warning).collect();

    // Initial code and refinement loop.
    changes.push(Change::State(JobState::GeneratingInitial));
    commit(job, changes).await?;
    let options = LoopOptions {
        merge_mode: shared.config.merge_mode,
    };
    let mut observer = Persist { job };
    let outcome = run_refinement_loop(llm, &resolved, &theme, iterations, options, &mut observer)
        .await
        .map_err(|e| e.to_string())?;

    Ok(match outcome.failure {
        None => Finished {
            state: JobState::Completed,
            detail: None,
        },
        Some(failure) => {
            let detail = format!("refinement iteration {} failed: {}", failure.iteration, failure.error);
            let state = match job.state().await {
                JobState::Refining(_) => JobState::Partial,
                other => JobState::Failed(other.stage_name()),
            };
            Finished {
                state,
                detail: Some(detail),
            }
        }
    })
}

struct Persist<'a> {
    job: &'a JobHandle,
}

#[async_trait]
impl LoopObserver for Persist<'_> {
    async fn iteration_started(&mut self, iteration: u32) -> Result<(), String> {
        commit(self.job, vec![Change::State(JobState::Refining(iteration))]).await
    }

    async fn suggestions_ready(&mut self, iteration: u32, s: &RefinementSuggestions) -> Result<(), String> {
        write(self.job, &fd_core::codegen::suggestion_ref(iteration), s.text.clone().into_bytes()).await
    }

    async fn version_ready(&mut self, v: &WebsiteVersion) -> Result<(), String> {
        write(self.job, &version_path(v.index), v.html.clone().into_bytes()).await?;
        commit(
            self.job,
            vec![Change::Version {
                index: v.index,
                content_hash: v.content_hash.clone(),
            }],
        )
        .await
    }
}
