//! Mosaic: a systolic grid of Neuron Tiles and Routing Tiles.
//!
//! The grid is `(2i+1) x (2i+1)` tiles. Neuron Tiles sit on even-even
//! coordinates, every other position is a Routing Tile, so adjacent Neuron
//! Tiles are separated by exactly one router. Each Neuron Tile holds `k`
//! neurons.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TileKind {
    Neuron,
    Router,
}

/// Devices in one Neuron Tile: `k` rows with inputs from four directions
/// plus local recurrence.
pub fn neuron_tile_devices(k: usize) -> usize {
    5 * k * k
}

/// Devices in one Routing Tile: `4k` inputs by `4k` outputs.
pub fn router_tile_devices(k: usize) -> usize {
    16 * k * k
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MosaicLayout {
    pub i: usize,
    pub k: usize,
    /// Grid coordinates of the Neuron Tiles, row-major.
    pub neuron_tiles: Vec<(usize, usize)>,
    pub router_tiles: Vec<(usize, usize)>,
}

impl MosaicLayout {
    pub fn new(i: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("neurons per tile must be positive"));
        }
        let side = 2 * i + 1;
        let mut neuron_tiles = Vec::with_capacity((i + 1) * (i + 1));
        let mut router_tiles = Vec::new();
        for r in 0..side {
            for c in 0..side {
                if r % 2 == 0 && c % 2 == 0 {
                    neuron_tiles.push((r, c));
                } else {
                    router_tiles.push((r, c));
                }
            }
        }
        Ok(Self {
            i,
            k,
            neuron_tiles,
            router_tiles,
        })
    }

    /// Smallest square layout holding `n` neurons at `k` per tile.
    pub fn for_neurons(n: usize, k: usize) -> Result<Self> {
        Self::new(grid_parameter(n, k)?, k)
    }

    pub fn side(&self) -> usize {
        2 * self.i + 1
    }

    pub fn tiles_per_row(&self) -> usize {
        self.i + 1
    }

    pub fn n_neurons(&self) -> usize {
        self.k * self.neuron_tiles.len()
    }

    pub fn kind(&self, r: usize, c: usize) -> TileKind {
        if r % 2 == 0 && c % 2 == 0 {
            TileKind::Neuron
        } else {
            TileKind::Router
        }
    }

    /// Index `(row, col)` of the Neuron Tile holding neuron `a`.
    pub fn tile_index(&self, a: usize) -> (usize, usize) {
        let t = a / self.k;
        (t / self.tiles_per_row(), t % self.tiles_per_row())
    }

    /// Total devices, counted tile by tile.
    pub fn device_count(&self) -> usize {
        let per_tile = |&(r, c): &(usize, usize)| match self.kind(r, c) {
            TileKind::Neuron => neuron_tile_devices(self.k),
            TileKind::Router => router_tile_devices(self.k),
        };
        self.neuron_tiles.iter().chain(&self.router_tiles).map(per_tile).sum()
    }

    /// Minimum number of Routing Tiles between the tiles of each neuron pair.
    pub fn hop_matrix(&self) -> Array2<u32> {
        let n = self.n_neurons();
        Array2::from_shape_fn((n, n), |(a, b)| {
            let (ra, ca) = self.tile_index(a);
            let (rb, cb) = self.tile_index(b);
            (ra.abs_diff(rb) + ca.abs_diff(cb)) as u32
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// `i = ceil(sqrt(ceil(n / k))) - 1`.
pub fn grid_parameter(n: usize, k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::config("neurons per tile must be positive"));
    }
    if n == 0 {
        return Err(Error::config("network needs at least one neuron"));
    }
    let tiles = n.div_ceil(k);
    let mut side = (tiles as f64).sqrt().floor() as usize;
    while side * side < tiles {
        side += 1;
    }
    while side > 1 && (side - 1) * (side - 1) >= tiles {
        side -= 1;
    }
    Ok(side - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub mosaic: u64,
    pub reference: u64,
    pub favorable: bool,
}

/// Memory devices of a Mosaic for `n` neurons versus one `n x n` crossbar.
pub fn memory_footprint(n: usize, k: usize) -> Result<Footprint> {
    let i = grid_parameter(n, k)? as u64;
    let k = k as u64;
    let t = (i + 1) * (i + 1);
    let r = (2 * i + 1) * (2 * i + 1) - t;
    let mosaic = t * 5 * k * k + r * (4 * k) * (4 * k);
    let reference = (n as u64) * (n as u64);
    Ok(Footprint {
        mosaic,
        reference,
        favorable: mosaic < reference,
    })
}

/// `S = exp(beta H) - 1`.
pub fn mosaic_mask(h: &Array2<u32>, beta: f64) -> Result<Array2<f64>> {
    if !(beta > 0.0) {
        return Err(Error::config("mask beta must be positive"));
    }
    Ok(h.mapv(|x| (beta * f64::from(x)).exp_m1()))
}

fn check_same(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(&[a.nrows(), a.ncols()], &[b.nrows(), b.ncols()]));
    }
    Ok(())
}

/// `lambda * sum(S * W^2)`.
pub fn layout_regularizer(w: &Array2<f64>, s: &Array2<f64>, lambda: f64) -> Result<f64> {
    check_same(w, s)?;
    Ok(lambda * w.iter().zip(s).map(|(w, s)| s * w * w).sum::<f64>())
}

/// Gradient of [`layout_regularizer`] with respect to `W`.
pub fn layout_regularizer_grad(w: &Array2<f64>, s: &Array2<f64>, lambda: f64) -> Result<Array2<f64>> {
    check_same(w, s)?;
    Ok(Array2::from_shape_fn(w.dim(), |ix| 2.0 * lambda * s[ix] * w[ix]))
}

/// Magnitude pruning that starts at a given epoch and never revives entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Pruner {
    pub threshold: f64,
    pub start_epoch: usize,
    pruned: Array2<bool>,
}

impl Pruner {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            threshold: 0.005,
            start_epoch: 10,
            pruned: Array2::from_elem((rows, cols), false),
        }
    }

    /// Zeroes small and previously pruned weights. Returns the pruned count.
    pub fn prune(&mut self, w: &mut Array2<f64>, epoch: usize) -> Result<usize> {
        if w.dim() != self.pruned.dim() {
            let (r, c) = self.pruned.dim();
            return Err(Error::shape(&[r, c], &[w.nrows(), w.ncols()]));
        }
        let active = epoch >= self.start_epoch;
        for (x, p) in w.iter_mut().zip(self.pruned.iter_mut()) {
            if active && x.abs() < self.threshold {
                *p = true;
            }
            if *p {
                *x = 0.0;
            }
        }
        Ok(self.pruned.iter().filter(|&&p| p).count())
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.pruned
    }
}

/// Write-noise standard deviation for a device range topping at `g_max`.
pub fn noise_sigma(g_max: f64) -> f64 {
    0.05 * g_max
}

/// Adds programming noise to weights expressed in conductance units.
pub fn noisy_transfer<R: Rng + ?Sized>(w: &Array2<f64>, g_max: f64, rng: &mut R) -> Array2<f64> {
    let sigma = noise_sigma(g_max);
    if sigma == 0.0 {
        return w.clone();
    }
    let d = Normal::new(0.0, sigma).expect("finite sigma");
    w.mapv(|x| x + d.sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub edges: usize,
    pub density: f64,
    pub clustering: f64,
    /// Mean over connected ordered pairs; `None` without any such pair.
    pub mean_shortest_path: Option<f64>,
}

/// Undirected neuron graph obtained by programming a Mosaic at random.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MosaicGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl MosaicGraph {
    pub fn from_edges(n: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        Self { n, edges, adjacency }
    }

    pub fn neighbors(&self, a: usize) -> &[usize] {
        &self.adjacency[a]
    }

    /// Symmetric 0/1 connection matrix.
    pub fn connection_matrix(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.n, self.n));
        for &(a, b) in &self.edges {
            w[[a, b]] = 1.0;
            w[[b, a]] = 1.0;
        }
        w
    }

    pub fn density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.edges.len() as f64 / (self.n * (self.n - 1) / 2) as f64
    }

    /// Average local clustering coefficient; nodes of degree < 2 count as 0.
    pub fn clustering(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let mut is_nb = vec![false; self.n];
        let mut total = 0.0;
        for a in 0..self.n {
            let nb = &self.adjacency[a];
            let d = nb.len();
            if d < 2 {
                continue;
            }
            for &b in nb {
                is_nb[b] = true;
            }
            let mut links = 0usize;
            for &b in nb {
                links += self.adjacency[b].iter().filter(|&&c| is_nb[c]).count();
            }
            for &b in nb {
                is_nb[b] = false;
            }
            // Each triangle edge is seen from both ends.
            total += links as f64 / (d * (d - 1)) as f64;
        }
        total / self.n as f64
    }

    pub fn mean_shortest_path(&self) -> Option<f64> {
        let mut sum = 0u64;
        let mut pairs = 0u64;
        let mut dist = vec![u32::MAX; self.n];
        let mut queue = VecDeque::new();
        for s in 0..self.n {
            dist.fill(u32::MAX);
            dist[s] = 0;
            queue.push_back(s);
            while let Some(a) = queue.pop_front() {
                for &b in &self.adjacency[a] {
                    if dist[b] == u32::MAX {
                        dist[b] = dist[a] + 1;
                        sum += u64::from(dist[b]);
                        pairs += 1;
                        queue.push_back(b);
                    }
                }
            }
        }
        (pairs > 0).then(|| sum as f64 / pairs as f64)
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            edges: self.edges.len(),
            density: self.density(),
            clustering: self.clustering(),
            mean_shortest_path: self.mean_shortest_path(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Programs each Neuron-Tile device to its conductive state with probability
/// `p_n` and each routing channel with probability `p_r`. Neurons of one tile
/// connect through the tile crossbar; neurons of adjacent tiles connect when
/// both the crossbar device and the routing channel between them conduct.
pub fn random_program<R: Rng + ?Sized>(layout: &MosaicLayout, p_n: f64, p_r: f64, rng: &mut R) -> Result<MosaicGraph> {
    for (what, v) in [("p_n", p_n), ("p_r", p_r)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Range {
                what,
                value: v,
                lo: 0.0,
                hi: 1.0,
            });
        }
    }
    let n = layout.n_neurons();
    let h = layout.hop_matrix();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let connected = match h[[a, b]] {
                0 => rng.random::<f64>() < p_n,
                1 => {
                    let device = rng.random::<f64>() < p_n;
                    let channel = rng.random::<f64>() < p_r;
                    device && channel
                }
                _ => false,
            };
            if connected {
                edges.push((a, b));
            }
        }
    }
    Ok(MosaicGraph::from_edges(n, edges))
}

/// Routing energy constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Energy of a spike delivered inside its own tile, fJ.
    pub e0_fj: f64,
    /// Energy per Routing Tile traversed, fJ.
    pub e1_fj: f64,
    /// Latency per Routing Tile, ns.
    pub latency1_ns: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            e0_fj: 400.0,
            e1_fj: 1600.0,
            latency1_ns: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub energy_fj: f64,
    pub power_pw: f64,
}

impl EnergyModel {
    pub fn spike_energy_fj(&self, hops: u32) -> f64 {
        if hops == 0 {
            self.e0_fj
        } else {
            f64::from(hops) * self.e1_fj
        }
    }

    /// Total energy of a histogram of spikes per hop count, and its average
    /// power over `duration` seconds.
    pub fn routing_energy(&self, hist: &BTreeMap<u32, u64>, duration: f64) -> Result<EnergyReport> {
        if !(duration > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        let energy_fj: f64 = hist.iter().map(|(&h, &c)| c as f64 * self.spike_energy_fj(h)).sum();
        Ok(EnergyReport {
            energy_fj,
            power_pw: energy_fj / duration / 1000.0,
        })
    }

    pub fn write_report<W: Write>(&self, hist: &BTreeMap<u32, u64>, duration: f64, w: W) -> Result<()> {
        let total = self.routing_energy(hist, duration)?;
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["hops", "spikes", "energy_fj", "latency_ns"])?;
        for (&h, &c) in hist {
            wr.write_record([
                h.to_string(),
                c.to_string(),
                (c as f64 * self.spike_energy_fj(h)).to_string(),
                (f64::from(h) * self.latency1_ns).to_string(),
            ])?;
        }
        wr.write_record(["total".into(), hist.values().sum::<u64>().to_string(), total.energy_fj.to_string(), String::new()])?;
        wr.flush()?;
        Ok(())
    }
}

/// Hop histogram of delivering each neuron's spikes to all of its targets.
/// `w[[a, b]] != 0` marks a connection from `a` to `b`.
pub fn hop_histogram(spike_counts: &[u64], w: &Array2<f64>, h: &Array2<u32>) -> Result<BTreeMap<u32, u64>> {
    let n = spike_counts.len();
    if w.dim() != (n, n) || h.dim() != (n, n) {
        return Err(Error::shape(&[n, n], &[w.nrows(), w.ncols()]));
    }
    let mut hist = BTreeMap::new();
    for (a, &c) in spike_counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        for b in 0..n {
            if w[[a, b]] != 0.0 {
                *hist.entry(h[[a, b]]).or_insert(0) += c;
            }
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::array;
    use proptest::prelude::*;

    /// Router tiles crossed on the cheapest grid path between two Neuron
    /// Tiles, by 0-1 BFS over the explicit tile grid.
    fn bfs_hops(layout: &MosaicLayout, from: (usize, usize), to: (usize, usize)) -> u32 {
        let side = layout.side();
        let mut dist = vec![u32::MAX; side * side];
        let mut dq = VecDeque::new();
        dist[from.0 * side + from.1] = 0;
        dq.push_back(from);
        while let Some((r, c)) = dq.pop_front() {
            let d = dist[r * side + c];
            let mut nbs = Vec::new();
            if r > 0 { nbs.push((r - 1, c)); }
            if c > 0 { nbs.push((r, c - 1)); }
            if r + 1 < side { nbs.push((r + 1, c)); }
            if c + 1 < side { nbs.push((r, c + 1)); }
            for (nr, nc) in nbs {
                let w = u32::from(layout.kind(nr, nc) == TileKind::Router);
                if d + w < dist[nr * side + nc] {
                    dist[nr * side + nc] = d + w;
                    if w == 0 { dq.push_front((nr, nc)); } else { dq.push_back((nr, nc)); }
                }
            }
        }
        dist[to.0 * side + to.1]
    }

    #[test]
    fn footprint_examples() {
        assert_eq!(
            memory_footprint(1024, 4).unwrap(),
            Footprint { mosaic: 200_960, reference: 1_048_576, favorable: true }
        );
        let f = memory_footprint(128, 8).unwrap();
        assert_eq!((f.mosaic, f.reference, f.favorable), (38_912, 16_384, false));
        let single = memory_footprint(64, 64).unwrap();
        assert_eq!(single.mosaic, 5 * 64 * 64);
        assert!(!single.favorable);
        assert!(memory_footprint(10, 0).is_err());
    }

    #[test]
    fn grid_parameter_cases() {
        assert_eq!(grid_parameter(1024, 4).unwrap(), 15);
        assert_eq!(grid_parameter(128, 8).unwrap(), 3);
        assert_eq!(grid_parameter(17, 1).unwrap(), 4);
        assert_eq!(grid_parameter(16, 1).unwrap(), 3);
        assert_eq!(grid_parameter(1, 1).unwrap(), 0);
    }

    #[test]
    fn layout_counts() {
        for i in 0..6 {
            let l = MosaicLayout::new(i, 3).unwrap();
            assert_eq!(l.neuron_tiles.len(), (i + 1) * (i + 1));
            assert_eq!(l.router_tiles.len(), (2 * i + 1).pow(2) - (i + 1).pow(2));
            assert_eq!(l.n_neurons(), 3 * (i + 1) * (i + 1));
        }
    }

    #[test]
    fn hop_examples() {
        let l = MosaicLayout::new(3, 2).unwrap();
        let h = l.hop_matrix();
        assert_eq!(h[[0, 1]], 0);
        assert_eq!(h[[0, 2]], 1);
        // Tile (0,0) to tile (1,2): index offset (2,1) in (col,row).
        let b = (l.tiles_per_row() + 2) * l.k;
        assert_eq!(h[[0, b]], 3);
        assert_eq!(bfs_hops(&l, (0, 0), (2, 4)), 3);
    }

    #[test]
    fn hop_matrix_matches_bfs() {
        for i in 0..5 {
            let l = MosaicLayout::new(i, 1).unwrap();
            let h = l.hop_matrix();
            for (a, &ta) in l.neuron_tiles.iter().enumerate() {
                for (b, &tb) in l.neuron_tiles.iter().enumerate() {
                    assert_eq!(h[[a, b]], bfs_hops(&l, ta, tb));
                }
            }
        }
    }

    #[test]
    fn mask_values() {
        let h = array![[0u32, 1, 3]];
        let s = mosaic_mask(&h, 1.0).unwrap();
        assert_eq!(s[[0, 0]], 0.0);
        assert!((s[[0, 1]] - 1.71828).abs() < 1e-5);
        assert!((s[[0, 2]] - 19.0855).abs() < 1e-4);
        assert!(mosaic_mask(&h, 0.0).is_err());
    }

    #[test]
    fn regularizer_values() {
        let s = array![[1.0, 3.0]];
        assert_eq!(layout_regularizer(&Array2::zeros((1, 2)), &s, 0.1).unwrap(), 0.0);
        let w = array![[2.0, 0.0]];
        assert!((layout_regularizer(&w, &s, 0.1).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(layout_regularizer_grad(&w, &s, 0.1).unwrap(), array![[0.4, 0.0]]);
    }

    #[test]
    fn pruning_schedule() {
        let mut p = Pruner::new(1, 3);
        let mut w = array![[0.001, -0.004, 0.5]];
        assert_eq!(p.prune(&mut w, 9).unwrap(), 0);
        assert_eq!(w, array![[0.001, -0.004, 0.5]]);
        assert_eq!(p.prune(&mut w, 10).unwrap(), 2);
        assert_eq!(w, array![[0.0, 0.0, 0.5]]);
        w[[0, 0]] = 0.3;
        p.prune(&mut w, 11).unwrap();
        assert_eq!(w[[0, 0]], 0.0);
    }

    #[test]
    fn noise_scale() {
        assert_eq!(noise_sigma(120.0), 6.0);
        let w = Array2::from_elem((100, 100), 50.0);
        assert_eq!(noisy_transfer(&w, 0.0, &mut stream(0, "n")), w);
        let out = noisy_transfer(&w, 120.0, &mut stream(1, "n"));
        let d = &out - &w;
        let m = d.mean().unwrap();
        let sd = (d.mapv(|x| (x - m).powi(2)).sum() / (d.len() - 1) as f64).sqrt();
        assert!((sd / 6.0 - 1.0).abs() < 0.03, "{sd}");
    }

    #[test]
    fn energy_examples() {
        let e = EnergyModel::default();
        let hist = BTreeMap::from([(0, 1000)]);
        assert_eq!(e.routing_energy(&hist, 1.0).unwrap().power_pw, 400.0);
        let hist = BTreeMap::from([(0, 950), (1, 40), (2, 10)]);
        let r = e.routing_energy(&hist, 1.0).unwrap();
        assert_eq!(r.energy_fj, 476_000.0);
        assert_eq!(r.power_pw, 476.0);
        assert_eq!(e.routing_energy(&BTreeMap::new(), 1.0).unwrap().energy_fj, 0.0);
        assert!(e.routing_energy(&hist, 0.0).is_err());

        let mut buf = Vec::new();
        e.write_report(&hist, 1.0, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("2,10,32000,50"));
    }

    #[test]
    fn histogram_from_connectivity() {
        let l = MosaicLayout::new(1, 1).unwrap();
        let h = l.hop_matrix();
        let mut w = Array2::zeros((4, 4));
        w[[0, 1]] = 0.5;
        w[[0, 3]] = -0.2;
        let hist = hop_histogram(&[3, 0, 0, 0], &w, &h).unwrap();
        assert_eq!(hist, BTreeMap::from([(1, 3), (2, 3)]));
    }

    #[test]
    fn random_programming() {
        let l = MosaicLayout::new(2, 4).unwrap();
        let empty = random_program(&l, 0.0, 0.0, &mut stream(0, "g")).unwrap();
        assert!(empty.edges.is_empty());
        assert_eq!(empty.stats().mean_shortest_path, None);

        let full = random_program(&l, 1.0, 1.0, &mut stream(0, "g")).unwrap();
        let s = full.stats();
        // An Erdos-Renyi graph of equal density has expected clustering equal to it.
        assert!(s.clustering > s.density, "{s:?}");

        let (mut dense, mut sparse) = (0.0, 0.0);
        for seed in 0..20 {
            dense += random_program(&l, 0.75, 0.6, &mut stream(seed, "d")).unwrap().density();
            sparse += random_program(&l, 0.30, 0.05, &mut stream(seed, "s")).unwrap().density();
        }
        assert!(dense > sparse);
        assert!(random_program(&l, 1.5, 0.0, &mut stream(0, "g")).is_err());
    }

    #[test]
    fn graph_metrics_on_known_graphs() {
        let tri = MosaicGraph::from_edges(3, vec![(0, 1), (1, 2), (0, 2)]);
        assert_eq!(tri.clustering(), 1.0);
        assert_eq!(tri.mean_shortest_path(), Some(1.0));
        let path = MosaicGraph::from_edges(3, vec![(0, 1), (1, 2)]);
        assert_eq!(path.clustering(), 0.0);
        assert!((path.mean_shortest_path().unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let json = tri.to_json().unwrap();
        assert!(json.contains("\"edges\":[[0,1],[1,2],[0,2]]"));
    }

    proptest! {
        #[test]
        fn footprint_matches_device_count(i in 0usize..8, k in 1usize..16) {
            let l = MosaicLayout::new(i, k).unwrap();
            let n = l.n_neurons();
            prop_assert_eq!(memory_footprint(n, k).unwrap().mosaic, l.device_count() as u64);
        }

        #[test]
        fn mask_is_monotone(a in 0u32..20, b in 0u32..20, beta in 0.01f64..2.0) {
            let s = mosaic_mask(&array![[a, b]], beta).unwrap();
            prop_assert_eq!(a <= b, s[[0, 0]] <= s[[0, 1]]);
            prop_assert_eq!(s[[0, 0]] == 0.0, a == 0);
        }
    }
}
