//! Recorded MC streams. A replay file stores every stochastic output of a
//! run so that the adaptive loop can be re-driven bit-exactly without the
//! model or the generator.
//!
//! Format: CSV with header `sample_id,pass,dim0,...,dim{k}`; passes of a
//! sample are contiguous and numbered from 0.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::predictor::StochasticPredictor;
use crate::rng::Rng;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayFile {
    dim: usize,
    samples: BTreeMap<usize, Vec<Vec<f64>>>,
}

impl ReplayFile {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            samples: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Appends the next pass of `sample_id`.
    pub fn push(&mut self, sample_id: usize, output: Vec<f64>) -> Result<()> {
        if output.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: output.len(),
            });
        }
        self.samples.entry(sample_id).or_default().push(output);
        Ok(())
    }

    pub fn insert(&mut self, sample_id: usize, passes: Vec<Vec<f64>>) -> Result<()> {
        for p in passes {
            self.push(sample_id, p)?;
        }
        Ok(())
    }

    pub fn sample_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.samples.keys().copied()
    }

    /// Recorded pass count of a sample.
    pub fn passes(&self, sample_id: usize) -> Option<usize> {
        self.samples.get(&sample_id).map(Vec::len)
    }

    pub fn outputs(&self, sample_id: usize) -> Result<&[Vec<f64>]> {
        self.samples
            .get(&sample_id)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownSample(sample_id))
    }

    /// A predictor that plays back `sample_id`'s passes in order.
    pub fn stream(&self, sample_id: usize) -> Result<ReplayStream> {
        Ok(ReplayStream::new(self.dim, self.outputs(sample_id)?.to_vec()))
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_owned(), "pass".to_owned()];
        header.extend((0..self.dim).map(|j| format!("dim{j}")));
        w.write_record(&header)?;
        for (id, passes) in &self.samples {
            for (p, out) in passes.iter().enumerate() {
                let mut rec = vec![id.to_string(), p.to_string()];
                // Debug formatting of f64 is shortest round-trip.
                rec.extend(out.iter().map(|v| format!("{v:?}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "sample_id" || &header[1] != "pass" {
            return Err(Error::MissingColumn("sample_id,pass,dim0".into()));
        }
        for (j, h) in header.iter().skip(2).enumerate() {
            if h != format!("dim{j}") {
                return Err(Error::MissingColumn(format!("dim{j}")));
            }
        }
        let mut file = Self::new(header.len() - 2);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let parse_err = |col: usize, message: String| Error::Parse {
                row,
                column: header.get(col).unwrap_or("").to_owned(),
                message,
            };
            let id: usize = rec[0].parse().map_err(|e| parse_err(0, format!("{e}")))?;
            let pass: usize = rec[1].parse().map_err(|e| parse_err(1, format!("{e}")))?;
            let expected = file.passes(id).unwrap_or(0);
            if pass != expected {
                return Err(parse_err(1, format!("expected pass {expected}, found {pass}")));
            }
            if file.samples.contains_key(&id) && file.samples.keys().next_back() != Some(&id) {
                return Err(parse_err(0, format!("passes of sample {id} are not contiguous")));
            }
            let out = rec
                .iter()
                .enumerate()
                .skip(2)
                .map(|(c, v)| v.parse::<f64>().map_err(|e| parse_err(c, format!("{e}"))))
                .collect::<Result<Vec<_>>>()?;
            file.push(id, out)?;
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }
}

/// Plays a fixed list of outputs, one per `predict_once`, ignoring the input
/// and the generator. Running past the end is [`Error::ReplayExhausted`].
#[derive(Debug)]
pub struct ReplayStream {
    dim: usize,
    outputs: Vec<Vec<f64>>,
    cursor: AtomicUsize,
}

impl ReplayStream {
    pub fn new(dim: usize, outputs: Vec<Vec<f64>>) -> Self {
        Self {
            dim,
            outputs,
            cursor: AtomicUsize::new(0),
        }
    }

    pub fn consumed(&self) -> usize {
        self.cursor.load(Ordering::Relaxed)
    }

    pub fn rewind(&self) {
        self.cursor.store(0, Ordering::Relaxed);
    }
}

impl StochasticPredictor for ReplayStream {
    fn output_dim(&self) -> usize {
        self.dim
    }

    fn predict_once(&self, _x: &[f64], _rng: &mut Rng) -> Result<Vec<f64>> {
        let i = self.cursor.fetch_add(1, Ordering::Relaxed);
        self.outputs.get(i).cloned().ok_or(Error::ReplayExhausted(i))
    }

    /// The first recorded pass.
    fn predict_deterministic(&self, _x: &[f64]) -> Result<Vec<f64>> {
        self.outputs.first().cloned().ok_or(Error::ReplayExhausted(0))
    }
}

/// Records every draw of a wrapped predictor into a [`ReplayFile`].
pub fn record<P: StochasticPredictor + ?Sized>(
    predictor: &P,
    inputs: &[(usize, &[f64])],
    passes: usize,
    rng: &mut Rng,
) -> Result<ReplayFile> {
    let mut file = ReplayFile::new(predictor.output_dim());
    for &(id, x) in inputs {
        for _ in 0..passes {
            file.push(id, predictor.predict_once(x, rng)?)?;
        }
    }
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::{adaptive_mc_dropout, AdaptiveConfig};
    use crate::nn::{Mlp, MlpSpec};
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut f = ReplayFile::new(2);
        f.insert(3, vec![vec![0.1, 1.0 / 3.0], vec![-1e-300, f64::MAX]]).unwrap();
        f.insert(7, vec![vec![f64::MIN_POSITIVE, -0.0]]).unwrap();
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,pass,dim0,dim1\n"));
        let back = ReplayFile::read(buf.as_slice()).unwrap();
        for id in [3, 7] {
            let (a, b) = (f.outputs(id).unwrap(), back.outputs(id).unwrap());
            for (ra, rb) in a.iter().zip(b) {
                for (x, y) in ra.iter().zip(rb) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        let gap = "sample_id,pass,dim0\n0,0,1\n0,2,1\n";
        assert!(ReplayFile::read(gap.as_bytes()).is_err());
        let split = "sample_id,pass,dim0\n0,0,1\n1,0,1\n0,1,1\n";
        assert!(ReplayFile::read(split.as_bytes()).is_err());
        let header = "id,pass,dim0\n0,0,1\n";
        assert!(ReplayFile::read(header.as_bytes()).is_err());
        let cell = "sample_id,pass,dim0\n0,0,x\n";
        assert!(matches!(ReplayFile::read(cell.as_bytes()), Err(Error::Parse { row: 2, .. })));
    }

    #[test]
    fn replay_reproduces_recorded_mc_run() {
        let spec = MlpSpec::classifier(3, 4).with_hidden(&[8]).with_dropout(0.5);
        let mlp = Mlp::init(&spec, 11).unwrap();
        let x = [0.3, -1.0, 2.0];
        let cfg = AdaptiveConfig::new(200, 1e-3, 5);
        let live = adaptive_mc_dropout(&mlp, &x, &cfg, &mut stream(4, &[])).unwrap();

        let file = record(&mlp, &[(0, &x)], live.passes, &mut stream(4, &[])).unwrap();
        let mut buf = Vec::new();
        file.write(&mut buf).unwrap();
        let file = ReplayFile::read(buf.as_slice()).unwrap();
        let replay = file.stream(0).unwrap();
        let again = adaptive_mc_dropout(&replay, &x, &cfg, &mut stream(999, &[])).unwrap();
        assert_eq!(again, live);
        assert_eq!(replay.consumed(), live.passes);
    }

    #[test]
    fn unknown_sample_and_exhaustion() {
        let mut f = ReplayFile::new(1);
        f.push(0, vec![1.0]).unwrap();
        assert!(matches!(f.stream(5), Err(Error::UnknownSample(5))));
        let s = f.stream(0).unwrap();
        let mut r = stream(0, &[]);
        s.predict_once(&[], &mut r).unwrap();
        assert!(matches!(s.predict_once(&[], &mut r), Err(Error::ReplayExhausted(1))));
        assert!(f.push(0, vec![1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_values_roundtrip(vals in proptest::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40)) {
            let mut f = ReplayFile::new(1);
            for v in &vals {
                f.push(0, vec![*v]).unwrap();
            }
            let mut buf = Vec::new();
            f.write(&mut buf).unwrap();
            let back = ReplayFile::read(buf.as_slice()).unwrap();
            let got: Vec<u64> = back.outputs(0).unwrap().iter().map(|r| r[0].to_bits()).collect();
            let want: Vec<u64> = vals.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
