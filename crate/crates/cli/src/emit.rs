//! Artifact files: polytope JSON per iterate, vertex CSVs for plotting, and
//! trajectory CSVs with a failing-step marker.
//!
//! Layout under the output directory:
//!
//! ```text
//! polytopes/<series>_<k>.json    every iterate, halfspace form
//! vertices/<series>_<k>.csv      vertices when the dimension is at most 3
//! vertices/<series>_<k>_x.csv    vertices of the state projection
//! trajectories/<name>.csv        concatenated trajectories with ids
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use invset::geometry::vertices_to_csv;
use invset::{state_projection, Polytope, Trajectory};
use serde::Serialize;

use crate::config::Output;
use crate::error::CliError;

/// Highest dimension for which vertex files are written; above it only the
/// halfspace JSON is kept.
pub const MAX_PLOT_DIM: usize = 3;

pub struct Emitter {
    dir: PathBuf,
    opts: Output,
}

impl Emitter {
    pub fn new(opts: &Output) -> Result<Self, CliError> {
        fs::create_dir_all(&opts.dir).map_err(CliError::io(&opts.dir))?;
        Ok(Self {
            dir: opts.dir.clone(),
            opts: opts.clone(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&self, rel: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        fs::write(&path, contents).map_err(CliError::io(&path))?;
        log::debug!("wrote {}", path.display());
        Ok(path)
    }

    pub fn json<T: Serialize + ?Sized>(&self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
        text.push('\n');
        self.write(rel, &text)
    }

    /// Writes every iterate of a polytope sequence. With `state_dim` set,
    /// joint-space iterates also get vertex files for their state projection.
    pub fn polytope_series(
        &self,
        series: &str,
        iterates: &[Polytope],
        state_dim: Option<usize>,
    ) -> Result<(), CliError> {
        for (k, p) in iterates.iter().enumerate() {
            let stem = format!("{series}_{k:02}");
            if self.opts.polytopes {
                self.json(&format!("polytopes/{stem}.json"), &p.to_json())?;
            }
            if !self.opts.vertices {
                continue;
            }
            if p.dim() <= MAX_PLOT_DIM {
                self.write(
                    &format!("vertices/{stem}.csv"),
                    &vertices_to_csv(p.dim(), &p.vertices()?),
                )?;
            } else if k == 0 {
                log::info!(
                    "{series}: dimension {} is above {MAX_PLOT_DIM}, writing halfspaces only",
                    p.dim()
                );
            }
            if let Some(nx) = state_dim.filter(|&nx| nx < p.dim() && nx <= MAX_PLOT_DIM) {
                let x = state_projection(p, nx)?;
                self.write(
                    &format!("vertices/{stem}_x.csv"),
                    &vertices_to_csv(nx, &x.vertices()?),
                )?;
            }
        }
        Ok(())
    }

    /// One CSV holding all `trajectories`, keyed by id; header-only when empty.
    pub fn trajectories<'a>(
        &self,
        name: &str,
        nx: usize,
        nu: usize,
        trajectories: impl IntoIterator<Item = (usize, &'a Trajectory)>,
    ) -> Result<Option<PathBuf>, CliError> {
        let enabled = if name == "certification" {
            self.opts.certification
        } else {
            self.opts.trajectories
        };
        if !enabled {
            return Ok(None);
        }
        let mut csv = Trajectory::csv_header(nx, nu, true);
        for (id, t) in trajectories {
            csv.push_str(&t.csv_rows(Some(id)));
        }
        self.write(&format!("trajectories/{name}.csv"), &csv)
            .map(Some)
    }
}
