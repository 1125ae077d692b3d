//! Ordinal domains, records, datasets, range queries, and workloads.
//!
//! Attributes are indexed from 0 internally; values live in `[1, c]` where
//! the domain size `c` is a power of two. Queries are conjunctions of
//! closed-interval predicates over distinct attributes.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stream_rng;

/// An ordinal attribute domain `{1, ..., c}` with `c` a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalDomain {
    size: u32,
}

impl OrdinalDomain {
    pub fn new(c: u32) -> Result<Self> {
        if c < 2 || !c.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "domain size must be a power of two >= 2, got {c}"
            )));
        }
        Ok(Self { size: c })
    }

    /// Smallest valid domain that can hold `c` values (pads upward).
    pub fn padded(c: u32) -> Self {
        Self {
            size: c.max(2).next_power_of_two(),
        }
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn contains(&self, v: u32) -> bool {
        (1..=self.size).contains(&v)
    }
}

/// One user's record: a value in `[1, c]` per attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    values: Vec<u32>,
}

impl Record {
    pub fn new(values: Vec<u32>, domain: OrdinalDomain) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !domain.contains(**v)) {
            return Err(Error::InvalidParameter(format!(
                "record value {v} outside domain [1, {}]",
                domain.size()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn value(&self, attribute: usize) -> u32 {
        self.values[attribute]
    }
}

/// A collection of records sharing an attribute count and domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<Record>,
    attributes: usize,
    domain: OrdinalDomain,
}

impl Dataset {
    pub fn new(records: Vec<Record>, attributes: usize, domain: OrdinalDomain) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidParameter("dataset needs >= 1 record".into()));
        }
        if records.iter().any(|r| r.values.len() != attributes) {
            return Err(Error::InvalidParameter(
                "all records must have the same attribute count".into(),
            ));
        }
        Ok(Self {
            records,
            attributes,
            domain,
        })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn attributes(&self) -> usize {
        self.attributes
    }

    pub fn domain(&self) -> OrdinalDomain {
        self.domain
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn value(&self, user: usize, attribute: usize) -> u32 {
        self.records[user].value(attribute)
    }

    /// One record per line, comma-separated integers, with a header row.
    pub fn write_records<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.attributes).map(|t| format!("a{t}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let line: Vec<String> = r.values.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Read the line-oriented record format produced by [`write_records`]:
    /// header row, then one record of comma-separated integers per line.
    /// Values must already lie in `[1, c]`.
    pub fn read_records<R: Read>(r: R, c: u32) -> Result<Self> {
        let domain = OrdinalDomain::new(c)?;
        let reader = BufReader::new(r);
        let mut lines = reader.lines();
        let Some(_header) = lines.next().transpose()? else {
            return Err(Error::EmptyInput);
        };
        let mut records = Vec::new();
        let mut width = None;
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut values = Vec::new();
            for (j, cell) in line.split(',').enumerate() {
                let v: u32 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                    row: i + 2,
                    column: j + 1,
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
            if *width.get_or_insert(values.len()) != values.len() {
                return Err(Error::LengthMismatch(format!(
                    "row {} has {} values, expected {}",
                    i + 2,
                    values.len(),
                    width.unwrap()
                )));
            }
            records.push(Record::new(values, domain)?);
        }
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        let attributes = width.unwrap();
        Dataset::new(records, attributes, domain)
    }

    pub fn read_records_path(path: impl AsRef<Path>, c: u32) -> Result<Self> {
        Self::read_records(std::fs::File::open(path)?, c)
    }
}

/// Synthetic marginal distribution for [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticDist {
    Normal,
    Laplace,
}

/// Draw `n` records with equicorrelated continuous marginals (mean 0, sd 1,
/// pairwise covariance `covariance`), then discretize each coordinate by
/// clipping to `[-4, 4]` and equal-width binning into `c` buckets.
///
/// Bit-reproducible for a fixed seed.
pub fn generate_synthetic(
    dist: SyntheticDist,
    n: usize,
    d: usize,
    c: u32,
    covariance: f64,
    seed: u64,
) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if d < 2 {
        return Err(Error::InvalidParameter("d must be >= 2".into()));
    }
    if !(0.0..=1.0).contains(&covariance) {
        return Err(Error::InvalidParameter(format!(
            "covariance {covariance} outside [0, 1] (equicorrelation matrix not PSD)"
        )));
    }
    let domain = OrdinalDomain::new(c)?;
    let mut rng = stream_rng(&[seed, stream::SYNTH]);
    let shared_w = covariance.sqrt();
    let own_w = (1.0 - covariance).sqrt();
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        // Equicorrelated Gaussian: x_t = sqrt(rho) z0 + sqrt(1-rho) z_t.
        // The Laplace variant scales the whole record by sqrt(W), W ~ Exp(1),
        // which keeps unit marginal variance and pairwise covariance rho.
        let scale = match dist {
            SyntheticDist::Normal => 1.0,
            SyntheticDist::Laplace => {
                let w: f64 = rng.sample(Exp1);
                w.sqrt()
            }
        };
        let z0: f64 = rng.sample(StandardNormal);
        let values: Vec<u32> = (0..d)
            .map(|_| {
                let zt: f64 = rng.sample(StandardNormal);
                let x = scale * (shared_w * z0 + own_w * zt);
                discretize_clipped(x, c)
            })
            .collect();
        records.push(Record::new(values, domain)?);
    }
    Dataset::new(records, d, domain)
}

/// Clip to `[-4, 4]`, then equal-width bin into `[1, c]`.
fn discretize_clipped(x: f64, c: u32) -> u32 {
    let x = x.clamp(-4.0, 4.0);
    let bucket = ((x + 4.0) / 8.0 * c as f64).floor() as i64 + 1;
    bucket.clamp(1, c as i64) as u32
}

/// Ingest a headered CSV of numeric columns: each column is min-max scaled
/// and equal-width binned into `[1, c]`; `c` is padded up to the next power
/// of two if needed. Constant columns map to value 1.
pub fn ingest_csv<R: Read>(reader: R, c: u32) -> Result<Dataset> {
    let domain = OrdinalDomain::padded(c);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut rows = 0usize;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if columns.is_empty() {
            columns = vec![Vec::new(); rec.len()];
        }
        if rec.len() != columns.len() {
            return Err(Error::LengthMismatch(format!(
                "row {} has {} cells, expected {}",
                i + 2,
                rec.len(),
                columns.len()
            )));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumericCell {
                row: i + 2,
                column: j + 1,
                value: cell.to_string(),
            })?;
            columns[j].push(v);
        }
        rows += 1;
    }
    if rows == 0 || columns.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = columns.len();
    let c = domain.size();
    let mut records = vec![Vec::with_capacity(d); rows];
    for col in &columns {
        let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (i, &x) in col.iter().enumerate() {
            let v = if max > min {
                let bucket = ((x - min) / (max - min) * c as f64).floor() as i64 + 1;
                bucket.clamp(1, c as i64) as u32
            } else {
                1
            };
            records[i].push(v);
        }
    }
    let records = records
        .into_iter()
        .map(|values| Record::new(values, domain))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(records, d, domain)
}

pub fn ingest_csv_path(path: impl AsRef<Path>, c: u32) -> Result<Dataset> {
    ingest_csv(std::fs::File::open(path)?, c)
}

/// Closed interval `[lo, hi]` with `1 <= lo <= hi <= c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u32,
    pub hi: u32,
}

impl Interval {
    pub fn new(lo: u32, hi: u32) -> Result<Self> {
        if lo < 1 || lo > hi {
            return Err(Error::InvalidParameter(format!(
                "bad interval [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn len(&self) -> u32 {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false // constructor enforces lo <= hi
    }

    pub fn contains(&self, v: u32) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    /// Size of the overlap with `[lo, hi]`.
    pub fn overlap(&self, other: Interval) -> u32 {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }
}

/// One predicate: attribute index (0-based) restricted to an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub attribute: usize,
    pub interval: Interval,
}

/// A conjunction of predicates over distinct attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangeQuery {
    predicates: Vec<Predicate>,
}

impl RangeQuery {
    /// Build a query; predicates are stored sorted by attribute.
    pub fn new(mut predicates: Vec<Predicate>) -> Result<Self> {
        if predicates.is_empty() {
            return Err(Error::InvalidParameter("query needs >= 1 predicate".into()));
        }
        predicates.sort_by_key(|p| p.attribute);
        if predicates.windows(2).any(|w| w[0].attribute == w[1].attribute) {
            return Err(Error::InvalidParameter(
                "query attributes must be distinct".into(),
            ));
        }
        Ok(Self { predicates })
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    /// Query dimension.
    pub fn lambda(&self) -> usize {
        self.predicates.len()
    }

    pub fn matches(&self, record: &Record) -> bool {
        self.predicates
            .iter()
            .all(|p| p.interval.contains(record.value(p.attribute)))
    }

    pub fn interval_of(&self, attribute: usize) -> Option<Interval> {
        self.predicates
            .iter()
            .find(|p| p.attribute == attribute)
            .map(|p| p.interval)
    }
}

/// A set of same-shape queries drawn for one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryWorkload {
    pub queries: Vec<RangeQuery>,
    pub omega: f64,
    pub seed: u64,
}

impl QueryWorkload {
    /// One query per line: `attr:lo-hi` triples (1-based attributes) joined
    /// by semicolons.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for q in &self.queries {
            let parts: Vec<String> = q
                .predicates()
                .iter()
                .map(|p| format!("{}:{}-{}", p.attribute + 1, p.interval.lo, p.interval.hi))
                .collect();
            writeln!(w, "{}", parts.join(";"))?;
        }
        Ok(())
    }
}

/// Parse a `attr:lo-hi` predicate (1-based attribute index).
pub fn parse_predicate(s: &str) -> Result<Predicate> {
    let bad = || Error::InvalidParameter(format!("bad predicate {s:?}, expected attr:lo-hi"));
    let (attr, range) = s.split_once(':').ok_or_else(bad)?;
    let (lo, hi) = range.split_once('-').ok_or_else(bad)?;
    let attr: usize = attr.trim().parse().map_err(|_| bad())?;
    if attr == 0 {
        return Err(bad());
    }
    let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
    Ok(Predicate {
        attribute: attr - 1,
        interval: Interval::new(lo, hi)?,
    })
}

/// Generate `count` random `lambda`-dimensional queries whose intervals all
/// have length `round(omega * c)` (round half up). Attributes are chosen
/// uniformly without replacement; starts are uniform over valid positions.
pub fn generate_queries(
    d: usize,
    c: u32,
    lambda: usize,
    omega: f64,
    count: usize,
    seed: u64,
) -> Result<QueryWorkload> {
    if lambda < 1 || lambda > d {
        return Err(Error::InvalidParameter(format!(
            "lambda {lambda} outside [1, {d}]"
        )));
    }
    let len = (omega * c as f64).round() as i64;
    if len < 1 || len > c as i64 {
        return Err(Error::InvalidParameter(format!(
            "omega {omega} yields interval length {len} outside [1, {c}]"
        )));
    }
    let len = len as u32;
    let mut rng = stream_rng(&[seed, stream::QUERIES]);
    let mut attrs: Vec<usize> = (0..d).collect();
    let mut queries = Vec::with_capacity(count);
    for _ in 0..count {
        attrs.shuffle(&mut rng);
        let mut chosen: Vec<usize> = attrs[..lambda].to_vec();
        chosen.sort_unstable();
        let predicates = chosen
            .into_iter()
            .map(|attribute| {
                let lo = rng.random_range(1..=c - len + 1);
                Ok(Predicate {
                    attribute,
                    interval: Interval::new(lo, lo + len - 1)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        queries.push(RangeQuery::new(predicates)?);
    }
    Ok(QueryWorkload {
        queries,
        omega,
        seed,
    })
}

/// Exact fraction of records satisfying every predicate.
pub fn true_answer(dataset: &Dataset, query: &RangeQuery) -> f64 {
    let hits = dataset.records().iter().filter(|r| query.matches(r)).count();
    hits as f64 / dataset.n() as f64
}

/// Stream tags for seed derivation.
pub(crate) mod stream {
    pub const SYNTH: u64 = 0x5359;
    pub const QUERIES: u64 = 0x5157;
    pub const GROUPS: u64 = 0x4752;
    pub const REPORTS: u64 = 0x5250;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_shapes_and_determinism() {
        let ds = generate_synthetic(SyntheticDist::Normal, 1000, 6, 64, 0.8, 7).unwrap();
        assert_eq!(ds.n(), 1000);
        assert_eq!(ds.attributes(), 6);
        assert!(ds
            .records()
            .iter()
            .all(|r| r.values().iter().all(|&v| (1..=64).contains(&v))));
        let ds2 = generate_synthetic(SyntheticDist::Normal, 1000, 6, 64, 0.8, 7).unwrap();
        assert_eq!(ds.records(), ds2.records());
    }

    #[test]
    fn synthetic_boundary_sizes() {
        let ds = generate_synthetic(SyntheticDist::Normal, 1, 2, 2, 0.0, 0).unwrap();
        assert_eq!(ds.n(), 1);
        assert!(ds.records()[0].values().iter().all(|&v| v == 1 || v == 2));
    }

    #[test]
    fn perfect_correlation_forces_equal_buckets() {
        let ds = generate_synthetic(SyntheticDist::Laplace, 100_000, 2, 64, 1.0, 3).unwrap();
        for r in ds.records() {
            assert_eq!(r.value(0), r.value(1), "rho = 1 must give equal buckets");
        }
    }

    #[test]
    fn synthetic_rejects_bad_covariance() {
        assert!(generate_synthetic(SyntheticDist::Normal, 10, 2, 4, 1.5, 0).is_err());
        assert!(generate_synthetic(SyntheticDist::Normal, 10, 2, 4, -0.1, 0).is_err());
    }

    #[test]
    fn ingest_equal_width_identity() {
        let csv = "x\n0\n1\n2\n3\n";
        let ds = ingest_csv(csv.as_bytes(), 4).unwrap();
        let got: Vec<u32> = ds.records().iter().map(|r| r.value(0)).collect();
        assert_eq!(got, vec![1, 2, 3, 4]);
    }

    #[test]
    fn ingest_constant_column_maps_to_one() {
        let csv = "x,y\n5,1\n5,2\n5,3\n";
        let ds = ingest_csv(csv.as_bytes(), 8).unwrap();
        assert!(ds.records().iter().all(|r| r.value(0) == 1));
    }

    #[test]
    fn ingest_two_point_column() {
        let csv = "x\n0\n10\n";
        let ds = ingest_csv(csv.as_bytes(), 2).unwrap();
        let got: Vec<u32> = ds.records().iter().map(|r| r.value(0)).collect();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn ingest_pads_domain_to_power_of_two() {
        let csv = "x\n1\n2\n3\n";
        let ds = ingest_csv(csv.as_bytes(), 6).unwrap();
        assert_eq!(ds.domain().size(), 8);
    }

    #[test]
    fn ingest_errors() {
        let err = ingest_csv("x,y\n1,juice\n".as_bytes(), 4).unwrap_err();
        match err {
            Error::NonNumericCell { row, column, .. } => {
                assert_eq!((row, column), (2, 2));
            }
            other => panic!("expected NonNumericCell, got {other:?}"),
        }
        assert!(matches!(
            ingest_csv("".as_bytes(), 4).unwrap_err(),
            Error::EmptyInput
        ));
    }

    #[test]
    fn queries_have_requested_shape() {
        let wl = generate_queries(6, 64, 2, 0.5, 200, 1).unwrap();
        assert_eq!(wl.queries.len(), 200);
        for q in &wl.queries {
            assert_eq!(q.lambda(), 2);
            for p in q.predicates() {
                assert_eq!(p.interval.len(), 32);
            }
        }
        let wl2 = generate_queries(6, 64, 2, 0.5, 200, 1).unwrap();
        assert_eq!(wl.queries, wl2.queries);
    }

    #[test]
    fn full_domain_queries_when_omega_is_one() {
        let wl = generate_queries(3, 8, 2, 1.0, 20, 5).unwrap();
        for q in &wl.queries {
            for p in q.predicates() {
                assert_eq!((p.interval.lo, p.interval.hi), (1, 8));
            }
        }
    }

    #[test]
    fn quarter_omega_interval_length() {
        let wl = generate_queries(3, 8, 3, 0.25, 10, 2).unwrap();
        for q in &wl.queries {
            for p in q.predicates() {
                assert_eq!(p.interval.len(), 2);
            }
        }
    }

    #[test]
    fn lambda_larger_than_d_is_rejected() {
        assert!(generate_queries(3, 8, 4, 0.5, 1, 0).is_err());
    }

    fn tiny_dataset(vals: &[&[u32]], c: u32) -> Dataset {
        let domain = OrdinalDomain::new(c).unwrap();
        let records = vals
            .iter()
            .map(|v| Record::new(v.to_vec(), domain).unwrap())
            .collect();
        Dataset::new(records, vals[0].len(), domain).unwrap()
    }

    #[test]
    fn true_answer_enumeration() {
        let ds = tiny_dataset(&[&[1, 1], &[1, 2], &[2, 1], &[2, 2]], 2);
        let q = RangeQuery::new(vec![
            Predicate {
                attribute: 0,
                interval: Interval::new(1, 1).unwrap(),
            },
            Predicate {
                attribute: 1,
                interval: Interval::new(1, 1).unwrap(),
            },
        ])
        .unwrap();
        assert_eq!(true_answer(&ds, &q), 0.25);
    }

    #[test]
    fn true_answer_full_domain_is_one() {
        let ds = tiny_dataset(&[&[1, 3], &[4, 2], &[2, 2]], 4);
        let q = RangeQuery::new(vec![
            Predicate {
                attribute: 0,
                interval: Interval::new(1, 4).unwrap(),
            },
            Predicate {
                attribute: 1,
                interval: Interval::new(1, 4).unwrap(),
            },
        ])
        .unwrap();
        assert_eq!(true_answer(&ds, &q), 1.0);
    }

    #[test]
    fn true_answer_direct_count() {
        let ds = tiny_dataset(&[&[1, 1], &[1, 2], &[2, 1]], 2);
        let q = RangeQuery::new(vec![Predicate {
            attribute: 0,
            interval: Interval::new(1, 1).unwrap(),
        }])
        .unwrap();
        assert!((true_answer(&ds, &q) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn records_round_trip() {
        let ds = generate_synthetic(SyntheticDist::Normal, 50, 3, 8, 0.5, 11).unwrap();
        let mut buf = Vec::new();
        ds.write_records(&mut buf).unwrap();
        let back = Dataset::read_records(buf.as_slice(), 8).unwrap();
        assert_eq!(ds.records(), back.records());
    }

    #[test]
    fn workload_text_format() {
        let wl = generate_queries(4, 8, 2, 0.5, 3, 9).unwrap();
        let mut buf = Vec::new();
        wl.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        for line in text.lines() {
            let preds: Vec<Predicate> = line
                .split(';')
                .map(|p| parse_predicate(p).unwrap())
                .collect();
            assert_eq!(preds.len(), 2);
            assert!(preds.iter().all(|p| p.interval.len() == 4));
        }
    }

    #[test]
    fn predicate_parsing() {
        let p = parse_predicate("3:5-10").unwrap();
        assert_eq!(p.attribute, 2);
        assert_eq!((p.interval.lo, p.interval.hi), (5, 10));
        assert!(parse_predicate("0:1-2").is_err());
        assert!(parse_predicate("1:9-2").is_err());
        assert!(parse_predicate("nope").is_err());
    }
}
