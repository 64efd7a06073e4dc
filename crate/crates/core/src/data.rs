//! Flow-feature dataset pipeline: ingestion of labeled delimiter-separated
//! flow files, cleaning, z-score normalization, stratified splitting, benign
//! downsampling, label regrouping and label exclusion.
//!
//! Every transform is pure (returns a new [`Dataset`]), deterministic under
//! fixed seeds, and records itself in the dataset's provenance.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One network flow: a feature vector plus its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub features: Vec<f64>,
    pub label: String,
}

/// An ordered collection of flow records with uniform feature count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    feature_names: Vec<String>,
    records: Vec<FlowRecord>,
    /// Source files this dataset was read from.
    sources: Vec<String>,
    /// Applied transforms, in order.
    transforms: Vec<String>,
}

/// Per-feature mean and population standard deviation, fitted on the
/// training split only. Zero-variance features keep `std = 0` and map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ZScoreParams {
    /// Indices of features whose training variance was zero.
    pub fn constant_features(&self) -> Vec<usize> {
        self.stds
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == 0.0).then_some(i))
            .collect()
    }

    /// Normalizes a single raw feature vector into `out`.
    pub fn normalize_into(&self, features: &[f64], out: &mut Vec<f32>) -> Result<()> {
        if features.len() != self.means.len() {
            return Err(Error::ShapeMismatch {
                what: "feature vector",
                expected: self.means.len(),
                actual: features.len(),
            });
        }
        out.clear();
        out.extend(features.iter().zip(self.means.iter().zip(&self.stds)).map(
            |(&x, (&m, &s))| {
                if s == 0.0 {
                    0.0
                } else {
                    ((x - m) / s) as f32
                }
            },
        ));
        Ok(())
    }
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, records: Vec<FlowRecord>) -> Result<Self> {
        let dim = feature_names.len();
        if let Some((i, r)) = records
            .iter()
            .enumerate()
            .find(|(_, r)| r.features.len() != dim)
        {
            return Err(Error::Validation(format!(
                "record {i} has {} features, expected {dim}",
                r.features.len()
            )));
        }
        Ok(Dataset {
            feature_names,
            records,
            sources: Vec::new(),
            transforms: Vec::new(),
        })
    }

    pub(crate) fn from_parts(
        feature_names: Vec<String>,
        records: Vec<FlowRecord>,
        sources: Vec<String>,
        transforms: Vec<String>,
    ) -> Self {
        Dataset {
            feature_names,
            records,
            sources,
            transforms,
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn records(&self) -> &[FlowRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn transforms(&self) -> &[String] {
        &self.transforms
    }

    pub fn label_counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.label.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// Distinct labels in first-appearance order.
    pub fn distinct_labels(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.records {
            if !seen.contains(&r.label) {
                seen.push(r.label.clone());
            }
        }
        seen
    }

    fn derived(&self, records: Vec<FlowRecord>, transform: String) -> Dataset {
        let mut transforms = self.transforms.clone();
        transforms.push(transform);
        Dataset {
            feature_names: self.feature_names.clone(),
            records,
            sources: self.sources.clone(),
            transforms,
        }
    }

    /// Drops every record containing a non-finite feature.
    pub fn clean(&self) -> Dataset {
        let kept: Vec<FlowRecord> = self
            .records
            .iter()
            .filter(|r| r.features.iter().all(|x| x.is_finite()))
            .cloned()
            .collect();
        let dropped = self.records.len() - kept.len();
        self.derived(kept, format!("clean: dropped {dropped} records"))
    }

    /// Population mean/std per feature. Fit on the training split only.
    pub fn fit_zscore(&self) -> Result<ZScoreParams> {
        if self.records.is_empty() {
            return Err(Error::validation("cannot fit z-score on an empty dataset"));
        }
        let dim = self.feature_dim();
        let n = self.records.len() as f64;
        let mut means = vec![0.0; dim];
        for r in &self.records {
            for (m, &x) in means.iter_mut().zip(&r.features) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; dim];
        for r in &self.records {
            for ((v, &m), &x) in vars.iter_mut().zip(&means).zip(&r.features) {
                let d = x - m;
                *v += d * d;
            }
        }
        let stds = vars.iter().map(|v| (v / n).sqrt()).collect();
        Ok(ZScoreParams { means, stds })
    }

    /// Applies previously fitted normalization; constant features map to 0.
    pub fn apply_zscore(&self, params: &ZScoreParams) -> Result<Dataset> {
        if params.means.len() != self.feature_dim() {
            return Err(Error::ShapeMismatch {
                what: "z-score parameters",
                expected: self.feature_dim(),
                actual: params.means.len(),
            });
        }
        let records = self
            .records
            .iter()
            .map(|r| FlowRecord {
                features: r
                    .features
                    .iter()
                    .zip(params.means.iter().zip(&params.stds))
                    .map(|(&x, (&m, &s))| if s == 0.0 { 0.0 } else { (x - m) / s })
                    .collect(),
                label: r.label.clone(),
            })
            .collect();
        Ok(self.derived(records, "zscore: applied".to_string()))
    }

    /// Stratified split: per class, `round(fraction * count)` records go to
    /// the training part, chosen uniformly at random; both parts preserve
    /// the original record order. No record lands in both parts.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::validation(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let mut per_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            per_class.entry(&r.label).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut to_train = vec![false; self.records.len()];
        for indices in per_class.values() {
            let n_train = (train_fraction * indices.len() as f64).round() as usize;
            let n_train = n_train.min(indices.len());
            let chosen = rand::seq::index::sample(&mut rng, indices.len(), n_train);
            for c in chosen.iter() {
                to_train[indices[c]] = true;
            }
        }
        let train: Vec<FlowRecord> = self
            .records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| to_train[i].then(|| r.clone()))
            .collect();
        let test: Vec<FlowRecord> = self
            .records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| (!to_train[i]).then(|| r.clone()))
            .collect();
        Ok((
            self.derived(
                train,
                format!("split: train fraction {train_fraction} seed {seed}"),
            ),
            self.derived(
                test,
                format!("split: test fraction {} seed {seed}", 1.0 - train_fraction),
            ),
        ))
    }

    /// Uniform random subsample of the benign class down to `target_count`;
    /// attack records are untouched and record order is preserved.
    pub fn downsample_benign(
        &self,
        benign_label: &str,
        target_count: usize,
        seed: u64,
    ) -> Result<Dataset> {
        let benign_idx: Vec<usize> = self
            .records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| (r.label == benign_label).then_some(i))
            .collect();
        if target_count > benign_idx.len() {
            return Err(Error::Validation(format!(
                "downsample target {target_count} exceeds {} available {benign_label:?} records",
                benign_idx.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = vec![true; self.records.len()];
        for &i in &benign_idx {
            keep[i] = false;
        }
        for c in rand::seq::index::sample(&mut rng, benign_idx.len(), target_count).iter() {
            keep[benign_idx[c]] = true;
        }
        let records = self
            .records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| keep[i].then(|| r.clone()))
            .collect();
        Ok(self.derived(
            records,
            format!("downsample: {benign_label} -> {target_count} seed {seed}"),
        ))
    }

    /// Rewrites labels through a grouping map. Every observed label must be
    /// mapped (identity entries included).
    pub fn regroup_labels(&self, grouping: &BTreeMap<String, String>) -> Result<Dataset> {
        let mut records = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let group = grouping
                .get(&r.label)
                .ok_or_else(|| Error::UnknownLabel(r.label.clone()))?;
            records.push(FlowRecord {
                features: r.features.clone(),
                label: group.clone(),
            });
        }
        Ok(self.derived(records, format!("regroup: {} rules", grouping.len())))
    }

    /// Concatenates two datasets with identical feature columns.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::Incompatible(
                "datasets have different feature columns".to_string(),
            ));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Ok(self.derived(records, format!("concat: +{} records", other.len())))
    }

    /// Partitions into (records whose label is not listed, records whose
    /// label is listed); both parts preserve order.
    pub fn exclude_labels(&self, labels: &[String]) -> (Dataset, Dataset) {
        let (excluded, reduced): (Vec<FlowRecord>, Vec<FlowRecord>) = self
            .records
            .iter()
            .cloned()
            .partition(|r| labels.contains(&r.label));
        (
            self.derived(reduced, format!("exclude: removed {labels:?}")),
            self.derived(excluded, format!("exclude: kept only {labels:?}")),
        )
    }
}

/// Reads labeled flow files (delimiter-separated, header row, label column
/// named `Label` after trimming). Non-numeric feature cells become NaN
/// markers for [`Dataset::clean`] to drop; row order is preserved.
pub fn load_flows<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::validation("no input files given"));
    }
    let mut feature_names: Option<Vec<String>> = None;
    let mut records = Vec::new();
    let mut sources = Vec::new();
    for path in paths {
        let path_str = path.as_ref().display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| Error::Ingestion {
                path: path_str.clone(),
                row: 0,
                message: e.to_string(),
            })?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Ingestion {
                path: path_str.clone(),
                row: 0,
                message: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        let this_label_col = headers.iter().position(|h| h == "Label").ok_or_else(|| {
            Error::Ingestion {
                path: path_str.clone(),
                row: 0,
                message: "missing \"Label\" column".to_string(),
            }
        })?;
        let these_features: Vec<String> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| (i != this_label_col).then(|| h.clone()))
            .collect();
        match &feature_names {
            None => feature_names = Some(these_features),
            Some(existing) if *existing != these_features => {
                return Err(Error::Ingestion {
                    path: path_str.clone(),
                    row: 0,
                    message: "feature columns differ from previously loaded files".to_string(),
                });
            }
            _ => {}
        }
        for (row_idx, row) in reader.records().enumerate() {
            let row = row.map_err(|e| Error::Ingestion {
                path: path_str.clone(),
                row: row_idx as u64 + 2,
                message: e.to_string(),
            })?;
            let expected = feature_names.as_ref().expect("set above").len() + 1;
            if row.len() != expected {
                return Err(Error::Ingestion {
                    path: path_str.clone(),
                    row: row_idx as u64 + 2,
                    message: format!("expected {expected} columns, got {}", row.len()),
                });
            }
            let mut features = Vec::with_capacity(expected - 1);
            let mut label = String::new();
            for (i, cell) in row.iter().enumerate() {
                if i == this_label_col {
                    label = cell.to_string();
                } else {
                    features.push(cell.parse::<f64>().unwrap_or(f64::NAN));
                }
            }
            records.push(FlowRecord { features, label });
        }
        sources.push(path_str);
    }
    Ok(Dataset::from_parts(
        feature_names.expect("at least one file"),
        records,
        sources,
        vec!["load".to_string()],
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn rec(features: &[f64], label: &str) -> FlowRecord {
        FlowRecord {
            features: features.to_vec(),
            label: label.to_string(),
        }
    }

    fn ds(records: Vec<FlowRecord>) -> Dataset {
        let dim = records[0].features.len();
        let names = (0..dim).map(|i| format!("f{i}")).collect();
        Dataset::new(names, records).unwrap()
    }

    #[test]
    fn load_fixture_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, " Flow Duration, Total Packets, Label").unwrap();
        writeln!(f, "1.5, 10, BENIGN").unwrap();
        writeln!(f, "2.5, Infinity, DoS").unwrap();
        writeln!(f, "3.5, 30, PortScan").unwrap();
        drop(f);
        let ds = load_flows(&[&path]).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_names(), &["Flow Duration", "Total Packets"]);
        assert_eq!(ds.records()[0].label, "BENIGN");
        assert_eq!(ds.records()[2].label, "PortScan");
        // "Infinity" parses to a non-finite marker for cleaning.
        assert!(!ds.records()[1].features[1].is_finite());
        assert_eq!(ds.clean().len(), 2);
    }

    #[test]
    fn load_reports_missing_label_column_and_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let no_label = dir.path().join("nolabel.csv");
        std::fs::write(&no_label, "a,b\n1,2\n").unwrap();
        assert!(matches!(
            load_flows(&[&no_label]),
            Err(Error::Ingestion { .. })
        ));

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "a,Label\n1,BENIGN\n1,2,3\n").unwrap();
        match load_flows(&[&ragged]) {
            Err(Error::Ingestion { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn clean_drops_nan_records_and_is_idempotent() {
        let d = ds(vec![
            rec(&[1.0, 2.0], "A"),
            rec(&[f64::NAN, 2.0], "A"),
            rec(&[1.0, f64::INFINITY], "B"),
            rec(&[3.0, 4.0], "B"),
        ]);
        let cleaned = d.clean();
        assert_eq!(cleaned.len(), 2);
        assert_eq!(cleaned.clean().records(), cleaned.records());
        // Fully finite input is unchanged.
        let finite = ds(vec![rec(&[1.0], "A"), rec(&[2.0], "B")]);
        assert_eq!(finite.clean().records(), finite.records());
    }

    #[test]
    fn zscore_matches_hand_arithmetic() {
        let d = ds(vec![rec(&[1.0], "A"), rec(&[2.0], "A"), rec(&[3.0], "A")]);
        let p = d.fit_zscore().unwrap();
        assert!((p.means[0] - 2.0).abs() < 1e-15);
        assert!((p.stds[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let z = d.apply_zscore(&p).unwrap();
        let got: Vec<f64> = z.records().iter().map(|r| r.features[0]).collect();
        assert!((got[0] - (-1.224744871391589)).abs() < 1e-12);
        assert!(got[1].abs() < 1e-15);
        assert!((got[2] - 1.224744871391589).abs() < 1e-12);
    }

    #[test]
    fn zscore_constant_column_maps_to_zero() {
        let d = ds(vec![rec(&[5.0], "A"), rec(&[5.0], "A"), rec(&[5.0], "A")]);
        let p = d.fit_zscore().unwrap();
        assert_eq!(p.constant_features(), vec![0]);
        let z = d.apply_zscore(&p).unwrap();
        assert!(z.records().iter().all(|r| r.features[0] == 0.0));
    }

    #[test]
    fn zscore_on_test_uses_train_statistics() {
        let train = ds(vec![rec(&[0.0], "A"), rec(&[2.0], "A")]);
        let test = ds(vec![rec(&[10.0], "A")]);
        let p = train.fit_zscore().unwrap();
        let z = test.apply_zscore(&p).unwrap();
        // (10 - 1) / 1, with train mean 1 and train population std 1.
        assert!((z.records()[0].features[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_train_split_has_zero_mean_unit_std() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let records: Vec<FlowRecord> = (0..500)
            .map(|_| {
                rec(
                    &[rng.gen_range(-100.0..100.0), rng.gen_range(0.0..1e6)],
                    "A",
                )
            })
            .collect();
        let d = ds(records);
        let p = d.fit_zscore().unwrap();
        let z = d.apply_zscore(&p).unwrap();
        for f in 0..2 {
            let vals: Vec<f64> = z.records().iter().map(|r| r.features[f]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9, "mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "std {}", var.sqrt());
        }
    }

    /// Class sizes mirroring the small benchmark classes; expected
    /// train/test counts from round(0.8 * n).
    #[test]
    fn stratified_split_reproduces_expected_per_class_counts() {
        let spec: &[(&str, usize, usize, usize)] = &[
            ("Heartbleed", 11, 9, 2),
            ("SqlInjection", 21, 17, 4),
            ("Infiltration", 36, 29, 7),
            ("XSS", 652, 522, 130),
            ("WebBruteForce", 1507, 1206, 301),
            ("Bot", 1956, 1565, 391),
        ];
        let mut records = Vec::new();
        for (label, total, _, _) in spec {
            for i in 0..*total {
                records.push(rec(&[i as f64], label));
            }
        }
        let d = ds(records);
        let (train, test) = d.split(0.8, 99).unwrap();
        let tc = train.label_counts();
        let sc = test.label_counts();
        for (label, total, exp_train, exp_test) in spec {
            assert_eq!(tc[*label] as usize, *exp_train, "{label} train");
            assert_eq!(sc[*label] as usize, *exp_test, "{label} test");
            assert_eq!(exp_train + exp_test, *total);
        }
        assert_eq!(train.len() + test.len(), d.len());
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let records: Vec<FlowRecord> = (0..200)
            .map(|i| rec(&[i as f64], if i % 3 == 0 { "A" } else { "B" }))
            .collect();
        let d = ds(records);
        let (tr1, te1) = d.split(0.8, 7).unwrap();
        let (tr2, te2) = d.split(0.8, 7).unwrap();
        assert_eq!(tr1.records(), tr2.records());
        assert_eq!(te1.records(), te2.records());
        let mut union: Vec<f64> = tr1
            .records()
            .iter()
            .chain(te1.records())
            .map(|r| r.features[0])
            .collect();
        union.sort_by(f64::total_cmp);
        let expected: Vec<f64> = (0..200).map(f64::from).collect();
        assert_eq!(union, expected);
        assert!(d.split(0.0, 7).is_err());
        assert!(d.split(1.0, 7).is_err());
    }

    #[test]
    fn downsample_keeps_attacks_untouched() {
        let mut records = Vec::new();
        for i in 0..100 {
            records.push(rec(&[i as f64], "BENIGN"));
        }
        for i in 0..10 {
            records.push(rec(&[1000.0 + i as f64], "DoS"));
        }
        let d = ds(records);
        let down = d.downsample_benign("BENIGN", 20, 1).unwrap();
        let counts = down.label_counts();
        assert_eq!(counts["BENIGN"], 20);
        assert_eq!(counts["DoS"], 10);
        // Unchanged when the target equals the current count.
        let same = d.downsample_benign("BENIGN", 100, 1).unwrap();
        assert_eq!(same.label_counts()["BENIGN"], 100);
        assert_eq!(same.records().len(), d.records().len());
        assert!(d.downsample_benign("BENIGN", 101, 1).is_err());
        // Deterministic per seed.
        let again = d.downsample_benign("BENIGN", 20, 1).unwrap();
        assert_eq!(down.records(), again.records());
    }

    #[test]
    fn regroup_rewrites_labels() {
        let d = ds(vec![
            rec(&[1.0], "DoS Hulk"),
            rec(&[2.0], "DDoS"),
            rec(&[3.0], "DoS slowloris"),
            rec(&[4.0], "BENIGN"),
        ]);
        let grouping = BTreeMap::from([
            ("DoS Hulk".to_string(), "(D)DoS".to_string()),
            ("DDoS".to_string(), "(D)DoS".to_string()),
            ("DoS slowloris".to_string(), "(D)DoS".to_string()),
            ("BENIGN".to_string(), "BENIGN".to_string()),
        ]);
        let g = d.regroup_labels(&grouping).unwrap();
        assert_eq!(g.label_counts()["(D)DoS"], 3);
        assert_eq!(g.label_counts()["BENIGN"], 1);

        // Identity grouping leaves the dataset unchanged.
        let identity: BTreeMap<String, String> = d
            .distinct_labels()
            .into_iter()
            .map(|l| (l.clone(), l))
            .collect();
        assert_eq!(d.regroup_labels(&identity).unwrap().records(), d.records());

        // Unmapped label is an error.
        let partial = BTreeMap::from([("DoS Hulk".to_string(), "(D)DoS".to_string())]);
        assert!(matches!(
            d.regroup_labels(&partial),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn exclude_partitions_and_preserves_order() {
        let d = ds(vec![
            rec(&[1.0], "A"),
            rec(&[2.0], "X"),
            rec(&[3.0], "A"),
            rec(&[4.0], "X"),
        ]);
        let (reduced, excluded) = d.exclude_labels(&["X".to_string()]);
        assert_eq!(reduced.label_counts().get("X"), None);
        assert_eq!(excluded.len(), 2);
        assert_eq!(excluded.records()[0].features[0], 2.0);
        assert_eq!(excluded.records()[1].features[0], 4.0);
        assert_eq!(reduced.len() + excluded.len(), d.len());
    }

    #[test]
    fn transforms_are_recorded_in_order() {
        let d = ds(vec![rec(&[1.0], "A"), rec(&[f64::NAN], "B")]);
        let out = d.clean();
        let names: Vec<&str> = out
            .transforms()
            .iter()
            .map(|t| t.split(':').next().unwrap())
            .collect();
        assert_eq!(names, vec!["clean"]);
    }
}
