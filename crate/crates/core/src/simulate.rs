//! Synthetic networks with planted clusters and latent positions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_categorical, sample_dirichlet, standard_normal, RngHandle};
use crate::error::{Error, Result};
use crate::model::{recompute_omega, simulate_network};
use crate::netdata::{density, AdjacencyMatrix};

/// Offset separating simulation streams from chain streams.
pub const SIMULATION_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub n: usize,
    pub delta: Vec<f64>,
    /// One row per cluster, one column per dimension.
    pub means: Vec<Vec<f64>>,
    pub alpha: f64,
    /// Symmetric Dirichlet concentration of the cluster weights.
    pub weight_concentration: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn dims(&self) -> usize {
        self.delta.len()
    }

    pub fn clusters(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter("a scenario needs at least 2 nodes".into()));
        }
        if self.delta.is_empty() || !(self.delta[0] > 0.0) || self.delta[1..].iter().any(|&d| !(d >= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "shrinkage {:?} needs delta1 > 0 and the rest >= 1",
                self.delta
            )));
        }
        if self.means.is_empty() || self.means.iter().any(|m| m.len() != self.dims()) {
            return Err(Error::DimensionMismatch(format!(
                "cluster means must have {} coordinates each",
                self.dims()
            )));
        }
        if !(self.weight_concentration > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter("weight concentration and alpha must be valid".into()));
        }
        Ok(())
    }
}

mod one_based {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(labels: &[usize], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(labels.iter().map(|c| c + 1))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        raw.into_iter()
            .map(|c| c.checked_sub(1).ok_or_else(|| serde::de::Error::custom("labels start at 1")))
            .collect()
    }
}

/// The generating values behind a simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub spec: ScenarioSpec,
    pub replicate: u64,
    /// Rows of the true latent positions.
    pub z: Vec<Vec<f64>>,
    /// Cluster of each node; 1-based on disk.
    #[serde(with = "one_based")]
    pub labels: Vec<usize>,
    pub tau: Vec<f64>,
    pub density: f64,
}

impl PlantedTruth {
    pub fn z_matrix(&self) -> DMatrix<f64> {
        let p = self.z.first().map_or(0, |r| r.len());
        DMatrix::from_fn(self.z.len(), p, |i, l| self.z[i][l])
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

/// Replicate 0 of a scenario.
pub fn generate(spec: &ScenarioSpec) -> Result<(AdjacencyMatrix, PlantedTruth)> {
    generate_replicate(spec, 0)
}

/// Draws weights, labels, positions and the network for one replicate.
pub fn generate_replicate(spec: &ScenarioSpec, replicate: u64) -> Result<(AdjacencyMatrix, PlantedTruth)> {
    spec.validate()?;
    let mut rng = RngHandle::new(spec.seed, SIMULATION_STREAM_BASE + replicate);
    let g = spec.clusters();
    let p = spec.dims();
    let tau = sample_dirichlet(&vec![spec.weight_concentration; g], &mut rng)?;
    let labels: Vec<usize> = (0..spec.n)
        .map(|_| sample_categorical(&tau, &mut rng))
        .collect::<Result<_>>()?;
    let sd: Vec<f64> = recompute_omega(&spec.delta).iter().map(|w| w.recip().sqrt()).collect();
    let mut z = DMatrix::zeros(spec.n, p);
    for (i, &c) in labels.iter().enumerate() {
        for l in 0..p {
            z[(i, l)] = spec.means[c][l] + sd[l] * standard_normal(&mut rng);
        }
    }
    let y = simulate_network(&z, spec.alpha, &mut rng);
    let truth = PlantedTruth {
        spec: spec.clone(),
        replicate,
        z: z.row_iter().map(|r| r.iter().copied().collect()).collect(),
        labels,
        tau,
        density: density(&y)?,
    };
    Ok((y, truth))
}

/// The two benchmark scenarios. With `literal` set, the first scenario uses
/// the duplicated third mean (−4, 0) instead of (−4, 4).
pub fn builtin_scenarios(literal: bool) -> Vec<ScenarioSpec> {
    let third = if literal { vec![-4.0, 0.0] } else { vec![-4.0, 4.0] };
    vec![
        ScenarioSpec {
            name: if literal { "scenario1-literal".into() } else { "scenario1".into() },
            n: 50,
            delta: vec![1.0, 1.05],
            means: vec![vec![0.0, 0.0], vec![-4.0, 0.0], third],
            alpha: 6.0,
            weight_concentration: 10.0,
            seed: 1,
        },
        ScenarioSpec {
            name: "scenario2".into(),
            n: 200,
            delta: vec![1.0, 1.1, 1.05, 1.02],
            means: vec![
                vec![-5.0, 0.0, 0.0, 0.0],
                vec![-5.0, 5.0, 0.0, 0.0],
                vec![0.0, -5.0, 5.0, 0.0],
                vec![0.0, 0.0, -5.0, 5.0],
                vec![2.0, 0.0, 2.0, -5.0],
                vec![-2.0, 2.0, -2.0, 0.0],
                vec![0.0, -2.0, 0.0, 0.0],
            ],
            alpha: 20.0,
            weight_concentration: 10.0,
            seed: 2,
        },
    ]
}

/// Scenario by 1-based index.
pub fn builtin_scenario(index: usize, literal: bool) -> Result<ScenarioSpec> {
    builtin_scenarios(literal)
        .into_iter()
        .nth(index.wrapping_sub(1))
        .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario {index}; choose 1 or 2")))
}
