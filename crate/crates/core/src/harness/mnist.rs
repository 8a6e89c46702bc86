//! MNIST 5-class task: a single-layer 784-to-5 spiking network whose
//! synapses are RRAM pairs reprogrammed through compliance currents by the
//! dual-memristor Delta rule.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::icc::{delta_rule_step, DeltaOutcome, DeltaRuleConfig, PowerLawIccModel};
use crate::rng::stream;
use crate::snn::classify_counts;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// An unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn idx_err(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "IDX file",
        reason: reason.into(),
    }
}

/// Parses an IDX stream: two zero bytes, type code 0x08, rank, big-endian
/// u32 dimensions, then the payload.
pub fn read_idx<R: Read>(mut r: R) -> Result<IdxArray> {
    let mut head = [0u8; 4];
    r.read_exact(&mut head).map_err(|_| idx_err("truncated header"))?;
    if head[0] != 0 || head[1] != 0 {
        return Err(idx_err("bad magic"));
    }
    if head[2] != 0x08 {
        return Err(idx_err(format!("unsupported element type 0x{:02x}", head[2])));
    }
    let mut dims = Vec::with_capacity(head[3] as usize);
    for _ in 0..head[3] {
        let mut d = [0u8; 4];
        r.read_exact(&mut d).map_err(|_| idx_err("truncated dimensions"))?;
        dims.push(u32::from_be_bytes(d) as usize);
    }
    let len: usize = dims.iter().product();
    let mut data = vec![0u8; len];
    r.read_exact(&mut data).map_err(|_| idx_err(format!("expected {len} data bytes")))?;
    Ok(IdxArray { dims, data })
}

pub fn write_idx<W: Write>(arr: &IdxArray, mut w: W) -> Result<()> {
    if arr.dims.iter().product::<usize>() != arr.data.len() {
        return Err(idx_err("dimensions do not match the payload"));
    }
    w.write_all(&[0, 0, 0x08, arr.dims.len() as u8])?;
    for &d in &arr.dims {
        w.write_all(&(d as u32).to_be_bytes())?;
    }
    w.write_all(&arr.data)?;
    Ok(())
}

/// Reads a plain or gzip-compressed IDX file.
pub fn read_idx_file(path: &Path) -> Result<IdxArray> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 2];
    r.read_exact(&mut magic).map_err(|_| idx_err("empty file"))?;
    let chained = std::io::Cursor::new(magic).chain(r);
    if magic == [0x1f, 0x8b] {
        read_idx(GzDecoder::new(chained))
    } else {
        read_idx(chained)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledImages {
    /// Row-major 28x28 images, concatenated.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, k: usize) -> &[u8] {
        &self.pixels[k * IMAGE_PIXELS..(k + 1) * IMAGE_PIXELS]
    }

    /// Keeps the first `limit` samples.
    pub fn truncate(&mut self, limit: usize) {
        let n = limit.min(self.len());
        self.labels.truncate(n);
        self.pixels.truncate(n * IMAGE_PIXELS);
    }
}

fn find_file(dir: &Path, stem: &str) -> Option<PathBuf> {
    [format!("{stem}.gz"), stem.to_string()]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

/// Loads one split (`train` or `t10k`) keeping labels below `classes`.
pub fn load_split(dir: &Path, split: &str, classes: u8) -> Result<LabeledImages> {
    let missing = |stem: &str| Error::MissingDataset {
        path: dir.join(stem),
        hint: "place the standard MNIST IDX files (train-images-idx3-ubyte, train-labels-idx1-ubyte, \
               t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte, optionally .gz) in this directory"
            .to_string(),
    };
    let img_stem = format!("{split}-images-idx3-ubyte");
    let lbl_stem = format!("{split}-labels-idx1-ubyte");
    let images = read_idx_file(&find_file(dir, &img_stem).ok_or_else(|| missing(&img_stem))?)?;
    let labels = read_idx_file(&find_file(dir, &lbl_stem).ok_or_else(|| missing(&lbl_stem))?)?;
    if images.dims.len() != 3 || images.dims[1..] != [IMAGE_SIDE, IMAGE_SIDE] {
        return Err(idx_err(format!("image dims {:?}", images.dims)));
    }
    if labels.dims != [images.dims[0]] {
        return Err(idx_err("label count differs from image count"));
    }
    let mut out = LabeledImages::default();
    for (k, &l) in labels.data.iter().enumerate() {
        if l < classes {
            out.labels.push(l);
            out.pixels.extend_from_slice(&images.data[k * IMAGE_PIXELS..(k + 1) * IMAGE_PIXELS]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MnistTaskConfig {
    pub classes: u8,
    pub epochs: usize,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Presentation time per image, s.
    pub presentation: f64,
    pub dt: f64,
    /// Poisson rate of a white pixel, Hz.
    pub max_rate: f64,
    /// Target spike rate on the true class, Hz.
    pub target_rate: f64,
    /// Factor mapping the filtered target trace onto output-rate units.
    pub target_gain: f64,
    /// Draw literal Poisson target spikes instead of the expected-rate trace.
    pub literal_target: bool,
    /// Time constant of the output and target low-pass filters, s.
    pub lpf_tau: f64,
    pub tau_m: f64,
    pub v_th: f64,
    /// Membrane increment per input spike and µS of weight.
    pub input_gain: f64,
    pub delta: DeltaRuleConfig,
    pub device: PowerLawIccModel,
    /// Permute the training labels (chance-level control).
    pub shuffle_labels: bool,
}

impl Default for MnistTaskConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            epochs: 3,
            train_limit: None,
            test_limit: None,
            presentation: 0.1,
            dt: 1e-3,
            max_rate: 200.0,
            target_rate: 40_000.0,
            target_gain: 4.96e-3,
            literal_target: false,
            lpf_tau: 0.0127,
            tau_m: 0.0384,
            v_th: 1.0,
            input_gain: 6.08e-5,
            delta: DeltaRuleConfig {
                eta: 0.2,
                delta_th: 132.6,
                ..DeltaRuleConfig::default()
            },
            device: PowerLawIccModel::default(),
            shuffle_labels: false,
        }
    }
}

impl MnistTaskConfig {
    pub fn validate(&self) -> Result<()> {
        self.delta.validate()?;
        if self.classes < 2 || self.epochs == 0 {
            return Err(Error::config("need at least two classes and one epoch"));
        }
        if !(self.dt > 0.0 && self.presentation >= self.dt && self.lpf_tau > 0.0 && self.tau_m > 0.0) {
            return Err(Error::config("time constants must be positive"));
        }
        if !(self.max_rate * self.dt <= 1.0) {
            return Err(Error::config("max_rate * dt must be a probability"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistResult {
    /// Training-set accuracy with learning off, per epoch.
    pub train_accuracy: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    /// Device pairs reprogrammed, per epoch.
    pub programmings: Vec<u64>,
    /// `confusion[true][predicted]` on the test set after the last epoch.
    pub confusion: Vec<Vec<u64>>,
}

/// Single-layer network of `classes` LIF neurons over 784 inputs.
struct Network {
    classes: usize,
    /// Excitatory and inhibitory conductances, µS, index `j * 784 + i`.
    g1: Vec<f64>,
    g2: Vec<f64>,
}

struct Presentation {
    counts: Vec<u32>,
    programmings: u64,
}

impl Network {
    fn new<R: Rng + ?Sized>(cfg: &MnistTaskConfig, rng: &mut R) -> Result<Self> {
        let n = cfg.classes as usize * IMAGE_PIXELS;
        let d = &cfg.device;
        let draw = |rng: &mut R| -> Result<f64> {
            let i = rng.random_range(cfg.delta.icc_min..=cfg.delta.icc_max);
            d.sample(i, rng)
        };
        let mut g1 = Vec::with_capacity(n);
        let mut g2 = Vec::with_capacity(n);
        for _ in 0..n {
            g1.push(draw(rng)?);
            g2.push(draw(rng)?);
        }
        Ok(Self {
            classes: cfg.classes as usize,
            g1,
            g2,
        })
    }

    /// Presents one image; learns when `label` is given.
    fn present<R: Rng + ?Sized>(&mut self, cfg: &MnistTaskConfig, image: &[u8], label: Option<usize>, rng: &mut R) -> Result<Presentation> {
        let steps = (cfg.presentation / cfg.dt).round() as usize;
        let alpha = (-cfg.dt / cfg.tau_m).exp();
        let decay = (-cfg.dt / cfg.lpf_tau).exp();
        // Scales a spike count per step into a rate-valued filter increment.
        let kick = (1.0 - decay) / cfg.dt;
        let active: Vec<(usize, f64)> = image
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0)
            .map(|(i, &p)| (i, f64::from(p) / 255.0 * cfg.max_rate * cfg.dt))
            .collect();
        let target_poisson = if cfg.literal_target {
            Some(Poisson::new(cfg.target_rate * cfg.dt).map_err(|e| Error::config(e.to_string()))?)
        } else {
            None
        };
        let nc = self.classes;
        let mut v = vec![0.0; nc];
        let mut out_lpf = vec![0.0; nc];
        let mut tgt_lpf = vec![0.0; nc];
        let mut delta = vec![0.0; nc];
        let mut counts = vec![0u32; nc];
        let mut spikes = Vec::with_capacity(active.len());
        let mut programmings = 0u64;

        for _ in 0..steps {
            spikes.clear();
            spikes.extend(active.iter().filter(|(_, p)| rng.random::<f64>() < *p).map(|&(i, _)| i));
            for j in 0..nc {
                let base = j * IMAGE_PIXELS;
                let current: f64 = spikes.iter().map(|&i| self.g1[base + i] - self.g2[base + i]).sum();
                v[j] = alpha * v[j] + cfg.input_gain * current;
                let z = if v[j] >= cfg.v_th {
                    v[j] -= cfg.v_th;
                    counts[j] += 1;
                    1.0
                } else {
                    0.0
                };
                out_lpf[j] = decay * out_lpf[j] + kick * z;
            }
            let Some(label) = label else { continue };
            for j in 0..nc {
                let t_spikes = if j != label {
                    0.0
                } else if let Some(p) = &target_poisson {
                    p.sample(rng)
                } else {
                    cfg.target_rate * cfg.dt
                };
                tgt_lpf[j] = decay * tgt_lpf[j] + kick * t_spikes;
                delta[j] = cfg.target_gain * tgt_lpf[j] - out_lpf[j];
            }
            for &i in &spikes {
                for (j, &d) in delta.iter().enumerate() {
                    if d.abs() <= cfg.delta.delta_th {
                        continue;
                    }
                    let k = j * IMAGE_PIXELS + i;
                    let i1 = cfg.device.inverse(self.g1[k]);
                    let i2 = cfg.device.inverse(self.g2[k]);
                    if let DeltaOutcome::Program { icc1, icc2, .. } = delta_rule_step(i1, i2, d, &cfg.delta) {
                        self.g1[k] = cfg.device.sample(icc1.clamp(cfg.device.i_min, cfg.device.i_max), rng)?;
                        self.g2[k] = cfg.device.sample(icc2.clamp(cfg.device.i_min, cfg.device.i_max), rng)?;
                        programmings += 1;
                    }
                }
            }
        }
        Ok(Presentation { counts, programmings })
    }
}

impl Network {
    /// Accuracy and confusion counts with learning off.
    fn evaluate<R: Rng + ?Sized>(&mut self, cfg: &MnistTaskConfig, data: &LabeledImages, rng: &mut R) -> Result<(f64, Vec<Vec<u64>>)> {
        let nc = self.classes;
        let mut confusion = vec![vec![0u64; nc]; nc];
        for k in 0..data.len() {
            let p = self.present(cfg, data.image(k), None, rng)?;
            confusion[data.labels[k] as usize][classify_counts(&p.counts)] += 1;
        }
        let hits: u64 = (0..nc).map(|c| confusion[c][c]).sum();
        Ok((hits as f64 / data.len() as f64, confusion))
    }
}

/// Trains for `cfg.epochs` epochs and reports accuracy after each.
pub fn run_mnist_task(cfg: &MnistTaskConfig, train: &LabeledImages, test: &LabeledImages, seed: u64) -> Result<MnistResult> {
    cfg.validate()?;
    let mut train = train.clone();
    let mut test = test.clone();
    if let Some(n) = cfg.train_limit {
        train.truncate(n);
    }
    if let Some(n) = cfg.test_limit {
        test.truncate(n);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::config("empty MNIST split"));
    }
    if cfg.shuffle_labels {
        train.labels.shuffle(&mut stream(seed, "label-shuffle"));
    }
    let nc = cfg.classes as usize;
    let mut rng = stream(seed, "mnist");
    let mut net = Network::new(cfg, &mut stream(seed, "mnist-init"))?;
    let mut result = MnistResult {
        train_accuracy: Vec::new(),
        test_accuracy: Vec::new(),
        programmings: Vec::new(),
        confusion: vec![vec![0; nc]; nc],
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut progs = 0u64;
        for &k in &order {
            let label = train.labels[k] as usize;
            progs += net.present(cfg, train.image(k), Some(label), &mut rng)?.programmings;
        }
        result.programmings.push(progs);
        let (train_acc, _) = net.evaluate(cfg, &train, &mut rng)?;
        let (test_acc, confusion) = net.evaluate(cfg, &test, &mut rng)?;
        result.train_accuracy.push(train_acc);
        result.test_accuracy.push(test_acc);
        result.confusion = confusion;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_split(dir: &Path, split: &str, images: &[Vec<u8>], labels: &[u8], gz: bool) {
        let img = IdxArray {
            dims: vec![images.len(), IMAGE_SIDE, IMAGE_SIDE],
            data: images.concat(),
        };
        let lbl = IdxArray {
            dims: vec![labels.len()],
            data: labels.to_vec(),
        };
        for (stem, arr) in [(format!("{split}-images-idx3-ubyte"), img), (format!("{split}-labels-idx1-ubyte"), lbl)] {
            if gz {
                let f = File::create(dir.join(format!("{stem}.gz"))).unwrap();
                let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::fast());
                write_idx(&arr, &mut enc).unwrap();
                enc.finish().unwrap();
            } else {
                write_idx(&arr, File::create(dir.join(stem)).unwrap()).unwrap();
            }
        }
    }

    /// Class `c` lights up a horizontal band of rows.
    fn band_image(c: u8, rng: &mut impl Rng) -> Vec<u8> {
        let mut img = vec![0u8; IMAGE_PIXELS];
        for r in 0..IMAGE_SIDE {
            for col in 0..IMAGE_SIDE {
                if r / 5 == c as usize && rng.random::<f64>() < 0.8 {
                    img[r * IMAGE_SIDE + col] = 255;
                }
            }
        }
        img
    }

    #[test]
    fn idx_roundtrip_and_errors() {
        let arr = IdxArray {
            dims: vec![2, 3],
            data: vec![1, 2, 3, 4, 5, 6],
        };
        let mut buf = Vec::new();
        write_idx(&arr, &mut buf).unwrap();
        assert_eq!(&buf[..4], &[0, 0, 8, 2]);
        assert_eq!(&buf[4..8], &[0, 0, 0, 2]);
        assert_eq!(read_idx(&buf[..]).unwrap(), arr);
        assert!(read_idx(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[2] = 0x0d;
        assert!(read_idx(&bad[..]).is_err());
        bad[0] = 1;
        assert!(read_idx(&bad[..]).is_err());
    }

    #[test]
    fn loads_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = stream(0, "img");
        let imgs: Vec<Vec<u8>> = (0..6).map(|k| band_image(k % 3, &mut rng)).collect();
        write_split(dir.path(), "train", &imgs, &[0, 1, 7, 2, 9, 4], true);
        write_split(dir.path(), "t10k", &imgs[..2], &[3, 8], false);
        let train = load_split(dir.path(), "train", 5).unwrap();
        assert_eq!(train.labels, [0, 1, 2, 4]);
        assert_eq!(train.image(2), &imgs[3][..]);
        let test = load_split(dir.path(), "t10k", 5).unwrap();
        assert_eq!(test.labels, [3]);
    }

    #[test]
    fn missing_dataset_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_split(dir.path(), "train", 5).unwrap_err();
        assert!(matches!(err, Error::MissingDataset { .. }));
        assert!(err.to_string().contains("train-images-idx3-ubyte"));
    }

    fn synthetic(n: usize, seed: u64) -> LabeledImages {
        let mut rng = stream(seed, "synthetic");
        let mut out = LabeledImages::default();
        for k in 0..n {
            let c = (k % 5) as u8;
            out.pixels.extend(band_image(c, &mut rng));
            out.labels.push(c);
        }
        out
    }

    #[test]
    fn learns_separable_bands() {
        let cfg = MnistTaskConfig {
            epochs: 1,
            ..MnistTaskConfig::default()
        };
        let r = run_mnist_task(&cfg, &synthetic(200, 1), &synthetic(50, 2), 0).unwrap();
        assert!(r.test_accuracy[0] > 0.9, "{r:?}");
        assert_eq!(r.confusion.iter().flatten().sum::<u64>(), 50);
    }

    #[test]
    fn deterministic() {
        let cfg = MnistTaskConfig {
            epochs: 1,
            ..MnistTaskConfig::default()
        };
        let a = run_mnist_task(&cfg, &synthetic(40, 1), &synthetic(10, 2), 3).unwrap();
        let b = run_mnist_task(&cfg, &synthetic(40, 1), &synthetic(10, 2), 3).unwrap();
        assert_eq!(a, b);
    }
}
