//! Feature-space comparison of generated streams and replayed logs.

pub mod hull;
pub mod pca;

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureId, FeatureVector};
use crate::io::feature_csv::read_features;

pub use hull::{convex_hull, polygon_area, Point};
pub use pca::{symmetric_eigen, Pca};

pub const GAP_LOW: f64 = 0.05;
pub const GAP_HIGH: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Generated,
    BenchmarkLog,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Generated => "generated",
            Group::BenchmarkLog => "log",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub group: Group,
    pub source: String,
    pub values: Vec<f64>,
}

/// One feature vector per stream or log, over a fixed feature list.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<FeatureId>,
    pub rows: Vec<MatrixRow>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<FeatureId>) -> Self {
        FeatureMatrix {
            ids,
            rows: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        group: Group,
        source: impl Into<String>,
        v: &FeatureVector,
    ) -> Result<()> {
        let source = source.into();
        let values = self
            .ids
            .iter()
            .map(|id| {
                v.get(*id)
                    .ok_or_else(|| Error::Degenerate(format!("{source}: feature {id} missing")))
            })
            .collect::<Result<Vec<f64>>>()?;
        self.rows.push(MatrixRow {
            group,
            source,
            values,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn values(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    /// Reads every `*.csv` feature file of `dir` (sorted by name) as one row
    /// holding the mean over its windows; the file stem is the source.
    pub fn load_dir(&mut self, dir: &Path, group: Group) -> Result<()> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        for path in paths {
            let vectors = read_features(fs::File::open(&path)?)?;
            let source = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let mean = FeatureVector::mean(&vectors)
                .ok_or_else(|| Error::Degenerate(format!("{} has no windows", path.display())))?;
            self.push(group, source, &mean)?;
        }
        Ok(())
    }
}

/// Projects the matrix onto its first `n_components` principal components.
pub fn pca_project(m: &FeatureMatrix, n_components: usize) -> Result<(Vec<Vec<f64>>, Pca)> {
    let rows = m.values();
    let pca = Pca::fit(&rows, n_components)?;
    Ok((rows.iter().map(|r| pca.transform(r)).collect(), pca))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRange {
    pub id: FeatureId,
    pub generated: (f64, f64),
    pub logs: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedRow {
    pub group: Group,
    pub source: String,
    pub pc: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceReport {
    pub rows: Vec<ProjectedRow>,
    pub explained: Vec<f64>,
    /// `None` when a group has fewer than 3 distinct projected points.
    pub generated_hull: Option<Vec<Point>>,
    pub logs_hull: Option<Vec<Point>>,
    pub ranges: Vec<FeatureRange>,
    /// Features the logs never exhibit (max below `GAP_LOW`) while the
    /// generated streams do (max above `GAP_HIGH`).
    pub gaps: Vec<FeatureId>,
    /// The same test with the groups' roles exchanged.
    pub reverse_gaps: Vec<FeatureId>,
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

/// Fits a joint PCA over both groups and compares their coverage.
pub fn compare_spaces(generated: &FeatureMatrix, logs: &FeatureMatrix) -> Result<SpaceReport> {
    if generated.is_empty() || logs.is_empty() {
        return Err(Error::Degenerate("both groups need rows".into()));
    }
    if generated.ids != logs.ids {
        return Err(Error::Degenerate("groups use different features".into()));
    }
    let mut joint = FeatureMatrix::new(generated.ids.clone());
    joint
        .rows
        .extend(generated.rows.iter().chain(&logs.rows).cloned());
    let n_gen = generated.len();
    let (coords, pca) = pca_project(&joint, 2)?;
    let rows: Vec<ProjectedRow> = joint
        .rows
        .iter()
        .zip(&coords)
        .enumerate()
        .map(|(i, (r, c))| ProjectedRow {
            group: if i < n_gen {
                Group::Generated
            } else {
                Group::BenchmarkLog
            },
            source: r.source.clone(),
            pc: [c[0], c[1]],
        })
        .collect();
    let hull_of = |range: std::ops::Range<usize>| -> Option<Vec<Point>> {
        let pts: Vec<Point> = rows[range].iter().map(|r| r.pc).collect();
        convex_hull(&pts).ok()
    };
    let generated_hull = hull_of(0..n_gen);
    let logs_hull = hull_of(n_gen..rows.len());

    let mut ranges = Vec::new();
    let mut gaps = Vec::new();
    let mut reverse_gaps = Vec::new();
    for (j, id) in generated.ids.iter().enumerate() {
        let g = min_max(generated.rows.iter().map(|r| r.values[j]));
        let l = min_max(logs.rows.iter().map(|r| r.values[j]));
        if l.1 < GAP_LOW && g.1 > GAP_HIGH {
            gaps.push(*id);
        }
        if g.1 < GAP_LOW && l.1 > GAP_HIGH {
            reverse_gaps.push(*id);
        }
        ranges.push(FeatureRange {
            id: *id,
            generated: g,
            logs: l,
        });
    }
    Ok(SpaceReport {
        rows,
        explained: pca.explained,
        generated_hull,
        logs_hull,
        ranges,
        gaps,
        reverse_gaps,
    })
}

impl SpaceReport {
    /// `source,label,pc1,pc2`
    pub fn pca_csv(&self) -> String {
        let mut out = String::from("source,label,pc1,pc2\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.6},{:.6}",
                r.source, r.group, r.pc[0], r.pc[1]
            )
            .expect("string write");
        }
        out
    }

    /// `label,vertex,pc1,pc2`, vertices in counter-clockwise order.
    pub fn hulls_csv(&self) -> String {
        let mut out = String::from("label,vertex,pc1,pc2\n");
        for (group, hull) in [
            (Group::Generated, &self.generated_hull),
            (Group::BenchmarkLog, &self.logs_hull),
        ] {
            for (i, p) in hull.iter().flatten().enumerate() {
                writeln!(out, "{group},{i},{:.6},{:.6}", p[0], p[1]).expect("string write");
            }
        }
        out
    }

    pub fn gaps_text(&self) -> String {
        let mut out = String::new();
        let names = |ids: &[FeatureId]| ids.iter().map(|i| i.name()).collect::<Vec<_>>().join(",");
        writeln!(
            out,
            "explained_variance: {:.6} {:.6}",
            self.explained[0], self.explained[1]
        )
        .expect("string write");
        writeln!(out, "missing_in_logs: {}", names(&self.gaps)).expect("string write");
        writeln!(out, "missing_in_generated: {}", names(&self.reverse_gaps)).expect("string write");
        for r in &self.ranges {
            writeln!(
                out,
                "range {}: generated [{:.6}, {:.6}] logs [{:.6}, {:.6}]",
                r.id, r.generated.0, r.generated.1, r.logs.0, r.logs.1
            )
            .expect("string write");
        }
        out
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("pca.csv"), self.pca_csv())?;
        fs::write(dir.join("hulls.csv"), self.hulls_csv())?;
        fs::write(dir.join("gaps.txt"), self.gaps_text())?;
        Ok(())
    }
}
