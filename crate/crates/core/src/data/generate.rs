use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::spec::{ClientId, ClientSpec, PartitionSpec};
use crate::error::{Error, Result};
use crate::model::Sample;
use crate::rng;

/// Group name whose offset is used for test samples of classes that no
/// held-out client carries.
pub const HOLDOUT_GROUP: &str = "__holdout__";

const MAX_MEAN_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorParams {
    pub feature_dim: usize,
    /// Norm of each class mean; means are pairwise at least this far apart.
    pub class_separation: f64,
    /// Norm of each group's mean offset.
    pub group_shift: f64,
    pub noise_sigma: f64,
    /// Per-group noise overrides, e.g. to make one group harder.
    pub group_noise: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            feature_dim: 64,
            class_separation: 3.0,
            group_shift: 1.0,
            noise_sigma: 1.0,
            group_noise: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.class_separation > 0.0) {
            return Err(Error::Config("class_separation must be positive".into()));
        }
        if !(self.noise_sigma > 0.0) || self.group_noise.values().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("noise sigmas must be positive".into()));
        }
        if !(self.group_shift >= 0.0) {
            return Err(Error::Config("group_shift must be non-negative".into()));
        }
        if self.feature_dim < num_classes {
            return Err(Error::Config(format!(
                "feature_dim {} is too small to separate {num_classes} classes",
                self.feature_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub client_id: ClientId,
    pub group: String,
    pub join_round: usize,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub clients: Vec<ClientData>,
    pub test: Vec<Sample>,
}

impl FederatedDataset {
    pub fn client(&self, id: ClientId) -> Option<&ClientData> {
        self.clients.iter().find(|c| c.client_id == id)
    }

    /// All training samples, clients in ascending id order.
    pub fn pooled(&self) -> Vec<Sample> {
        let mut clients: Vec<&ClientData> = self.clients.iter().collect();
        clients.sort_by_key(|c| c.client_id);
        clients
            .into_iter()
            .flat_map(|c| c.samples.iter().cloned())
            .collect()
    }
}

/// Gaussian class/group geometry. Sample `x` of class `c` in group `g` is
/// `mean[c] + offset(g) + sigma_g * z`.
#[derive(Debug, Clone)]
pub struct Generator {
    params: GeneratorParams,
    num_classes: usize,
    class_means: Vec<Vec<f64>>,
    /// Orthonormal basis of the span of the class means.
    mean_basis: Vec<Vec<f64>>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled_to(mut v: Vec<f64>, length: f64) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x *= length / n);
    }
    v
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let p = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, bi)| *x -= p * bi);
    }
}

impl Generator {
    pub fn new(num_classes: usize, params: &GeneratorParams) -> Result<Self> {
        params.validate(num_classes)?;
        let d = params.feature_dim;
        let mut rng = rng::stream(params.seed, &[rng::TAG_CLASS_MEANS]);
        let mut units: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
        let mut attempts = 0;
        while units.len() < num_classes {
            attempts += 1;
            if attempts > MAX_MEAN_ATTEMPTS {
                return Err(Error::Config(format!(
                    "could not place {num_classes} class means in {d} dimensions"
                )));
            }
            let u = scaled_to(gaussian_vec(&mut rng, d), 1.0);
            if units.iter().all(|w| dot(&u, w) < 0.5) {
                units.push(u);
            }
        }
        let mut mean_basis: Vec<Vec<f64>> = Vec::new();
        for u in &units {
            let mut v = u.clone();
            project_out(&mut v, &mean_basis);
            let n = norm(&v);
            if n > 1e-9 {
                mean_basis.push(v.iter().map(|x| x / n).collect());
            }
        }
        let class_means = units
            .into_iter()
            .map(|u| u.into_iter().map(|x| x * params.class_separation).collect())
            .collect();
        Ok(Generator {
            params: params.clone(),
            num_classes,
            class_means,
            mean_basis,
        })
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    pub fn class_means(&self) -> &[Vec<f64>] {
        &self.class_means
    }

    /// Offset for a covariate group, orthogonal to the class-mean span when
    /// the dimension leaves room for it.
    pub fn group_offset(&self, group: &str) -> Vec<f64> {
        let d = self.params.feature_dim;
        if self.params.group_shift == 0.0 {
            return vec![0.0; d];
        }
        let mut rng = rng::stream(
            self.params.seed,
            &[rng::TAG_GROUP_OFFSET, rng::hash_str(group)],
        );
        let mut v = gaussian_vec(&mut rng, d);
        if d > self.mean_basis.len() {
            project_out(&mut v, &self.mean_basis);
        }
        scaled_to(v, self.params.group_shift)
    }

    fn group_sigma(&self, group: &str) -> f64 {
        self.params
            .group_noise
            .get(group)
            .copied()
            .unwrap_or(self.params.noise_sigma)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, class: usize, offset: &[f64], sigma: f64) -> Sample {
        let features = self.class_means[class]
            .iter()
            .zip(offset)
            .map(|(m, o)| m + o + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Sample::new(features, class)
    }

    pub fn client_samples(&self, client: &ClientSpec) -> Result<Vec<Sample>> {
        if let Some(&k) = client.class_counts.keys().find(|&&k| k >= self.num_classes) {
            return Err(Error::Config(format!(
                "client {} references unknown class {k}",
                client.client_id
            )));
        }
        let mut rng = rng::stream(
            self.params.seed,
            &[rng::TAG_CLIENT_SAMPLES, u64::from(client.client_id)],
        );
        let offset = self.group_offset(&client.group);
        let sigma = self.group_sigma(&client.group);
        let mut out = Vec::with_capacity(client.total());
        for (&class, &count) in &client.class_counts {
            for _ in 0..count {
                out.push(self.draw(&mut rng, class, &offset, sigma));
            }
        }
        Ok(out)
    }

    /// Class-balanced test set. Classes carried by a held-out client are
    /// drawn round-robin from those clients' groups; the rest come from the
    /// dedicated holdout group.
    pub fn test_set(
        &self,
        spec: &PartitionSpec,
        excluded: &[ClientId],
        per_class_count: usize,
        seed: u64,
    ) -> Result<Vec<Sample>> {
        if per_class_count == 0 {
            return Err(Error::Config("per_class_count must be at least 1".into()));
        }
        for id in excluded {
            if spec.client(*id).is_none() {
                return Err(Error::Config(format!("excluded client {id} not in partition")));
            }
        }
        let mut out = Vec::with_capacity(per_class_count * self.num_classes);
        for class in 0..self.num_classes {
            let mut groups: Vec<&str> = spec
                .clients
                .iter()
                .filter(|c| excluded.contains(&c.client_id) && c.class_counts.contains_key(&class))
                .map(|c| c.group.as_str())
                .collect();
            if groups.is_empty() {
                groups.push(HOLDOUT_GROUP);
            }
            let sources: Vec<(Vec<f64>, f64)> = groups
                .iter()
                .map(|g| (self.group_offset(g), self.group_sigma(g)))
                .collect();
            let mut rng = rng::stream(
                self.params.seed,
                &[rng::TAG_TEST_SET, seed, class as u64],
            );
            for i in 0..per_class_count {
                let (offset, sigma) = &sources[i % sources.len()];
                out.push(self.draw(&mut rng, class, offset, *sigma));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestSetParams {
    pub per_class_count: usize,
    /// Clients removed from training whose distributions seed the test set.
    pub excluded_clients: Vec<ClientId>,
    pub seed: u64,
}

impl Default for TestSetParams {
    fn default() -> Self {
        TestSetParams {
            per_class_count: 200,
            excluded_clients: Vec::new(),
            seed: 0,
        }
    }
}

pub fn build_test_set(
    spec: &PartitionSpec,
    params: &GeneratorParams,
    excluded: &[ClientId],
    per_class_count: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    Generator::new(spec.num_classes, params)?.test_set(spec, excluded, per_class_count, seed)
}

/// Generates every non-excluded client's training data plus the shared test
/// set. A pure function of its arguments.
pub fn generate(
    spec: &PartitionSpec,
    params: &GeneratorParams,
    test: &TestSetParams,
) -> Result<FederatedDataset> {
    let generator = Generator::new(spec.num_classes, params)?;
    let test_samples = generator.test_set(
        spec,
        &test.excluded_clients,
        test.per_class_count,
        test.seed,
    )?;
    let clients = spec
        .clients
        .iter()
        .filter(|c| !test.excluded_clients.contains(&c.client_id))
        .map(|c| {
            Ok(ClientData {
                client_id: c.client_id,
                group: c.group.clone(),
                join_round: c.join_round,
                samples: generator.client_samples(c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FederatedDataset {
        num_classes: spec.num_classes,
        feature_dim: params.feature_dim,
        clients,
        test: test_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::spec::table1;

    fn spec_of(rows: &[(u32, &str, &[(usize, usize)])]) -> PartitionSpec {
        PartitionSpec::new(
            3,
            rows.iter()
                .map(|(id, g, counts)| ClientSpec {
                    client_id: *id,
                    group: g.to_string(),
                    class_counts: counts.iter().copied().collect(),
                    join_round: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn counts_follow_spec_exactly() {
        let t = table1();
        let params = GeneratorParams {
            feature_dim: 8,
            ..Default::default()
        };
        let ds = generate(&t, &params, &TestSetParams::default()).unwrap();
        assert_eq!(ds.client(1).unwrap().samples.len(), 1224);
        for (c, spec) in ds.clients.iter().zip(&t.clients) {
            for (&k, &n) in &spec.class_counts {
                assert_eq!(c.samples.iter().filter(|s| s.label == k).count(), n);
            }
        }
        assert_eq!(ds.test.len(), 6 * 200);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = spec_of(&[(1, "a", &[(0, 5), (1, 3)]), (2, "b", &[(2, 4)])]);
        let params = GeneratorParams {
            feature_dim: 6,
            seed: 11,
            ..Default::default()
        };
        let a = generate(&spec, &params, &TestSetParams::default()).unwrap();
        let b = generate(&spec, &params, &TestSetParams::default()).unwrap();
        assert_eq!(a, b);
        let other = GeneratorParams { seed: 12, ..params };
        assert_ne!(a, generate(&spec, &other, &TestSetParams::default()).unwrap());
    }

    #[test]
    fn client_streams_do_not_depend_on_roster() {
        let params = GeneratorParams {
            feature_dim: 6,
            ..Default::default()
        };
        let one = spec_of(&[(2, "b", &[(2, 4)])]);
        let two = spec_of(&[(1, "a", &[(0, 5)]), (2, "b", &[(2, 4)])]);
        let a = generate(&one, &params, &TestSetParams::default()).unwrap();
        let b = generate(&two, &params, &TestSetParams::default()).unwrap();
        assert_eq!(a.client(2), b.client(2));
    }

    #[test]
    fn test_set_is_disjoint_from_training() {
        let spec = spec_of(&[(1, "a", &[(0, 30), (1, 30)]), (2, "a", &[(2, 30)])]);
        let params = GeneratorParams {
            feature_dim: 5,
            ..Default::default()
        };
        let ds = generate(
            &spec,
            &params,
            &TestSetParams {
                per_class_count: 30,
                ..Default::default()
            },
        )
        .unwrap();
        for t in &ds.test {
            for c in &ds.clients {
                assert!(c.samples.iter().all(|s| s.features != t.features));
            }
        }
    }

    #[test]
    fn test_set_is_balanced_and_reproducible() {
        let t = table1();
        let params = GeneratorParams {
            feature_dim: 8,
            ..Default::default()
        };
        let a = build_test_set(&t, &params, &[21], 100, 3).unwrap();
        let b = build_test_set(&t, &params, &[21], 100, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 600);
        for k in 0..6 {
            assert_eq!(a.iter().filter(|s| s.label == k).count(), 100);
        }
        assert!(build_test_set(&t, &params, &[99], 10, 3).is_err());
        assert!(build_test_set(&t, &params, &[], 0, 3).is_err());
    }

    #[test]
    fn excluded_clients_shape_test_distribution() {
        let params = GeneratorParams {
            feature_dim: 10,
            group_shift: 5.0,
            noise_sigma: 0.01,
            ..Default::default()
        };
        let spec = spec_of(&[(1, "a", &[(0, 5)]), (2, "red", &[(1, 5)])]);
        let g = Generator::new(3, &params).unwrap();
        let test = g.test_set(&spec, &[2], 4, 0).unwrap();
        let red = g.group_offset("red");
        let hold = g.group_offset(HOLDOUT_GROUP);
        let expect = |class: usize, off: &[f64]| -> Vec<f64> {
            g.class_means()[class].iter().zip(off).map(|(m, o)| m + o).collect()
        };
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 0.1);
        for s in &test {
            let off = if s.label == 1 { &red } else { &hold };
            assert!(close(&s.features, &expect(s.label, off)));
        }
    }

    #[test]
    fn geometry_constraints() {
        let params = GeneratorParams {
            feature_dim: 12,
            class_separation: 4.0,
            group_shift: 2.0,
            ..Default::default()
        };
        let g = Generator::new(6, &params).unwrap();
        let means = g.class_means();
        for i in 0..6 {
            assert!((norm(&means[i]) - 4.0).abs() < 1e-9);
            for j in 0..i {
                let cos = dot(&means[i], &means[j]) / 16.0;
                assert!(cos < 0.5);
                let dist: f64 = means[i]
                    .iter()
                    .zip(&means[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist >= 4.0);
            }
        }
        let off = g.group_offset("blue");
        assert!((norm(&off) - 2.0).abs() < 1e-9);
        for m in means {
            assert!(dot(&off, m).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let bad = GeneratorParams {
            feature_dim: 4,
            ..Default::default()
        };
        assert!(matches!(Generator::new(6, &bad), Err(Error::Config(_))));
        let bad = GeneratorParams {
            noise_sigma: 0.0,
            ..Default::default()
        };
        assert!(Generator::new(3, &bad).is_err());
        let bad = GeneratorParams {
            class_separation: -1.0,
            ..Default::default()
        };
        assert!(Generator::new(3, &bad).is_err());
    }
}
