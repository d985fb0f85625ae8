//! Synthetic expression experiments with known cascade structure.
//!
//! Each compound's treated response is a smooth function of log time built
//! from steps, transient pulses and damped oscillations. Some compounds are
//! delayed copies of an earlier compound's response, which gives a known
//! causal structure and correlated reference profiles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{to_log_time, Condition, RawObservation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub compounds: usize,
    pub times_hours: Vec<f64>,
    pub replicates: usize,
    pub noise_sd: f64,
    /// Probability that a compound copies an earlier compound with a delay.
    pub child_fraction: f64,
    /// Columns of the reference profile matrix.
    pub profile_columns: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            compounds: 120,
            times_hours: vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 20.0, 24.0, 30.0, 36.0, 42.0, 48.0],
            replicates: 3,
            noise_sd: 0.15,
            child_fraction: 0.5,
            profile_columns: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motif {
    Step { center: f64, width: f64 },
    Pulse { center: f64, width: f64 },
    Oscillation { frequency: f64, phase: f64, decay: f64 },
}

impl Motif {
    fn eval(&self, u: f64) -> f64 {
        match *self {
            Motif::Step { center, width } => 1.0 / (1.0 + (-(u - center) / width).exp()),
            Motif::Pulse { center, width } => (-(u - center).powi(2) / (2.0 * width * width)).exp(),
            Motif::Oscillation {
                frequency,
                phase,
                decay,
            } => (frequency * u + phase).sin() * (-decay * u).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedCompound {
    pub compound_id: String,
    pub baseline: f64,
    pub terms: Vec<(f64, Motif)>,
    /// Log-time delay applied to every term.
    pub delay: f64,
    pub parent: Option<String>,
}

impl SimulatedCompound {
    /// Treated minus control response at log time `u`.
    pub fn response(&self, u: f64) -> f64 {
        let v = u - self.delay;
        self.terms.iter().map(|(a, m)| a * m.eval(v)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub compounds: Vec<SimulatedCompound>,
    pub observations: Vec<RawObservation>,
    /// Rows `(compound_id, values)` of the reference profile matrix.
    pub profiles: Vec<(String, Vec<f64>)>,
}

impl Simulation {
    /// Parent-child pairs of the cascade structure, canonical order.
    pub fn true_edges(&self) -> Vec<(String, String)> {
        let mut edges: Vec<(String, String)> = self
            .compounds
            .iter()
            .filter_map(|c| {
                let p = c.parent.clone()?;
                Some(if p < c.compound_id {
                    (p, c.compound_id.clone())
                } else {
                    (c.compound_id.clone(), p)
                })
            })
            .collect();
        edges.sort();
        edges
    }
}

fn random_motif(rng: &mut ChaCha8Rng, span: f64) -> Motif {
    match rng.gen_range(0..3) {
        0 => Motif::Step {
            center: rng.gen_range(0.1 * span..0.9 * span),
            width: rng.gen_range(0.4..0.9),
        },
        1 => Motif::Pulse {
            center: rng.gen_range(0.1 * span..0.9 * span),
            width: rng.gen_range(0.6..1.2),
        },
        _ => Motif::Oscillation {
            frequency: rng.gen_range(0.6..1.6),
            phase: rng.gen_range(0.0..std::f64::consts::TAU),
            decay: rng.gen_range(0.0..0.3),
        },
    }
}

fn amplitude(rng: &mut ChaCha8Rng) -> f64 {
    let a = rng.gen_range(0.8..2.0);
    if rng.gen_bool(0.5) {
        a
    } else {
        -a
    }
}

pub fn simulate(config: &SimulationConfig) -> Result<Simulation> {
    if config.compounds == 0 || config.replicates == 0 || config.times_hours.len() < 2 {
        return Err(Error::Config(
            "simulation needs compounds, replicates and at least two time points".into(),
        ));
    }
    if !(config.noise_sd >= 0.0) {
        return Err(Error::Config("noise sd must be nonnegative".into()));
    }
    let log_times = config
        .times_hours
        .iter()
        .map(|&t| to_log_time(t))
        .collect::<Result<Vec<_>>>()?;
    let span = log_times.iter().cloned().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width = config.compounds.to_string().len().max(3);

    let mut compounds: Vec<SimulatedCompound> = Vec::with_capacity(config.compounds);
    let mut roots: Vec<usize> = Vec::with_capacity(config.compounds);
    for i in 0..config.compounds {
        let id = format!("C{i:0width$}");
        let baseline = rng.gen_range(4.0..12.0);
        if i > 0 && rng.gen_bool(config.child_fraction) {
            let p = rng.gen_range(0..i);
            let parent = &compounds[p];
            let scale = rng.gen_range(0.6..1.4) * if rng.gen_bool(0.8) { 1.0 } else { -1.0 };
            let c = SimulatedCompound {
                compound_id: id,
                baseline,
                terms: parent.terms.iter().map(|(a, m)| (a * scale, *m)).collect(),
                delay: parent.delay + rng.gen_range(0.15..0.6),
                parent: Some(parent.compound_id.clone()),
            };
            roots.push(roots[p]);
            compounds.push(c);
        } else {
            let n_terms = rng.gen_range(1..=2);
            let terms = (0..n_terms).map(|_| (amplitude(&mut rng), random_motif(&mut rng, span))).collect();
            roots.push(i);
            compounds.push(SimulatedCompound {
                compound_id: id,
                baseline,
                terms,
                delay: 0.0,
                parent: None,
            });
        }
    }

    let noise = Normal::new(0.0, config.noise_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("noise: {e}")))?;
    let mut observations = Vec::new();
    for c in &compounds {
        let drift = rng.gen_range(-0.1..0.1);
        for cond in [Condition::Control, Condition::Treated] {
            for rep in 0..config.replicates {
                for (&t, &u) in config.times_hours.iter().zip(&log_times) {
                    let mut v = c.baseline + drift * u;
                    if cond == Condition::Treated {
                        v += c.response(u);
                    }
                    if config.noise_sd > 0.0 {
                        v += noise.sample(&mut rng);
                    }
                    observations.push(RawObservation {
                        compound_id: c.compound_id.clone(),
                        condition: cond,
                        replicate_id: format!("r{}", rep + 1),
                        time_hours: t,
                        value: v,
                    });
                }
            }
        }
    }

    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let latent: Vec<Vec<f64>> = (0..config.compounds)
        .map(|_| (0..config.profile_columns).map(|_| standard.sample(&mut rng)).collect())
        .collect();
    let profiles = compounds
        .iter()
        .zip(&roots)
        .map(|(c, &root)| {
            let row = latent[root]
                .iter()
                .map(|z| z + standard.sample(&mut rng))
                .collect();
            (c.compound_id.clone(), row)
        })
        .collect();
    Ok(Simulation {
        compounds,
        observations,
        profiles,
    })
}

/// Writes profile rows as CSV with header `compound_id,s1,s2,...`.
pub fn write_profiles<W: std::io::Write>(writer: W, profiles: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let cols = profiles.first().map_or(0, |p| p.1.len());
    let mut header = vec!["compound_id".to_string()];
    header.extend((1..=cols).map(|i| format!("s{i}")));
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for (id, row) in profiles {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let cfg = SimulationConfig {
            compounds: 10,
            ..Default::default()
        };
        let a = simulate(&cfg).unwrap();
        assert_eq!(a.observations.len(), 10 * 2 * 3 * 16);
        assert_eq!(a.profiles.len(), 10);
        assert_eq!(a, simulate(&cfg).unwrap());
        for (p, c) in a.true_edges() {
            assert!(p < c);
        }
    }

    #[test]
    fn child_is_delayed_parent() {
        let cfg = SimulationConfig {
            compounds: 30,
            child_fraction: 0.9,
            ..Default::default()
        };
        let s = simulate(&cfg).unwrap();
        let child = s.compounds.iter().find(|c| c.parent.is_some()).unwrap();
        let parent = s.compounds.iter().find(|c| Some(&c.compound_id) == child.parent.as_ref()).unwrap();
        let d = child.delay - parent.delay;
        assert!(d > 0.0);
        let ratio = child.terms[0].0 / parent.terms[0].0;
        for u in [0.5, 1.0, 2.0] {
            assert!((child.response(u + d) - ratio * parent.response(u)).abs() < 1e-12);
        }
    }
}
