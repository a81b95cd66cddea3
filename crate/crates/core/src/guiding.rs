//! Online-learned seed distributions over separator pairs.
//!
//! Training samples are packed 40-byte records of (shading point, light
//! point, chain direction, weight data, chain type). A kd-tree over the 6D
//! separator-pair space splits on the median of the widest axis until each
//! leaf holds at most floor(sqrt(|S|)) original samples; copies of
//! boundary-near samples flow across each split (10% of the parent
//! occupancy per side) so the fitted distributions do not harden at cell
//! walls. Copies are flagged: they join fits but never count toward
//! occupancy, never spawn further copies, and never activate a leaf.
//!
//! Each leaf pre-fits, once per rebuild: a chain-length table P(n), a
//! type table P(tau | n), and one von Mises-Fisher lobe per sample whose
//! concentration comes from the great-circle distance to the nearest other
//! sample of the same chain type.

use crate::chain::ChainType;
use crate::geometry::Aabb;
use crate::math::{angle_between, dir_from_spherical, spherical_from_dir, Vec3};
use crate::vmf::{VmfLobe, VmfMixture};

/// Round-to-nearest-even truncation of an f32 to its top 16 bits.
fn f32_to_bf16(x: f32) -> u16 {
    let b = x.to_bits();
    if x.is_nan() {
        return 0x7FC0;
    }
    let bias = 0x7FFF + ((b >> 16) & 1);
    ((b + bias) >> 16) as u16
}

fn bf16_to_f32(r: u16) -> f32 {
    f32::from_bits((r as u32) << 16)
}

const COPY_BIT: u16 = 1 << 15;

/// One recorded chain discovery, packed to 40 bytes so large training sets
/// stay memory-resident.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SubPathSample {
    /// Shading point then light point.
    pos: [f32; 6],
    /// Chain direction at the shading point, as (theta, phi).
    dir: [f32; 2],
    /// Scalar sub-path throughput.
    throughput: f32,
    /// Reciprocal-probability estimate k / P(n), bf16-encoded.
    recip: u16,
    /// Bit 15: boundary copy. Low bits: marker-encoded chain type.
    pack: u16,
}

impl SubPathSample {
    pub fn new(
        x_d: Vec3,
        x_l: Vec3,
        omega: Vec3,
        throughput: f64,
        recip: f64,
        tau: ChainType,
    ) -> Self {
        debug_assert!(tau.bits() & COPY_BIT == 0);
        let (theta, phi) = spherical_from_dir(omega);
        SubPathSample {
            pos: [
                x_d.x as f32,
                x_d.y as f32,
                x_d.z as f32,
                x_l.x as f32,
                x_l.y as f32,
                x_l.z as f32,
            ],
            dir: [theta as f32, phi as f32],
            throughput: throughput as f32,
            recip: f32_to_bf16(recip as f32),
            pack: tau.bits() & !COPY_BIT,
        }
    }

    pub fn x_d(&self) -> Vec3 {
        Vec3::new(self.pos[0] as f64, self.pos[1] as f64, self.pos[2] as f64)
    }

    pub fn x_l(&self) -> Vec3 {
        Vec3::new(self.pos[3] as f64, self.pos[4] as f64, self.pos[5] as f64)
    }

    pub fn omega(&self) -> Vec3 {
        dir_from_spherical(self.dir[0] as f64, self.dir[1] as f64)
    }

    pub fn throughput(&self) -> f64 {
        self.throughput as f64
    }

    pub fn recip(&self) -> f64 {
        bf16_to_f32(self.recip) as f64
    }

    pub fn tau(&self) -> ChainType {
        ChainType::from_bits(self.pack & !COPY_BIT).expect("packed chain type")
    }

    pub fn is_copy(&self) -> bool {
        self.pack & COPY_BIT != 0
    }

    fn as_copy(mut self) -> Self {
        self.pack |= COPY_BIT;
        self
    }

    /// Importance weight: throughput times the reciprocal-probability
    /// estimate.
    pub fn weight(&self) -> f64 {
        self.throughput() * self.recip()
    }

    fn coord(&self, axis: usize) -> f64 {
        self.pos[axis] as f64
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TreeParams {
    /// Fraction of parent occupancy copied across each side of a split.
    pub epsilon: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { epsilon: 0.10, kappa_min: 10.0, kappa_max: 1e6 }
    }
}

/// Per-chain-type directional distribution inside a leaf.
#[derive(Clone, Debug)]
pub struct ClassDist {
    tau: ChainType,
    weight: f64,
    /// (direction, concentration, weight) per contributing sample; kept so
    /// product reweighting can rescale lobes at query time.
    lobes: Vec<(Vec3, f64, f64)>,
    mixture: VmfMixture,
}

impl ClassDist {
    pub fn tau(&self) -> ChainType {
        self.tau
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn lobes(&self) -> &[(Vec3, f64, f64)] {
        &self.lobes
    }

    pub fn sample_dir(&self, u: [f64; 3]) -> Vec3 {
        self.mixture.sample(u)
    }

    pub fn pdf_dir(&self, w: Vec3) -> f64 {
        self.mixture.pdf(w)
    }
}

/// A leaf's fitted tables: P(n), P(tau | n) and per-type mixtures.
#[derive(Clone, Debug)]
pub struct LeafDist {
    /// Sorted by chain-type bits.
    classes: Vec<ClassDist>,
    /// (length, probability), sorted by length.
    lengths: Vec<(usize, f64)>,
}

impl LeafDist {
    fn from_classes(mut classes: Vec<ClassDist>) -> Option<LeafDist> {
        classes.retain(|c| c.weight > 0.0);
        if classes.is_empty() {
            return None;
        }
        classes.sort_by_key(|c| c.tau.bits());
        let total: f64 = classes.iter().map(|c| c.weight).sum();
        let mut lengths: Vec<(usize, f64)> = Vec::new();
        for c in &classes {
            let n = c.tau.len();
            match lengths.iter_mut().find(|(ln, _)| *ln == n) {
                Some((_, p)) => *p += c.weight / total,
                None => lengths.push((n, c.weight / total)),
            }
        }
        lengths.sort_by_key(|&(n, _)| n);
        Some(LeafDist { classes, lengths })
    }

    pub fn lengths(&self) -> &[(usize, f64)] {
        &self.lengths
    }

    pub fn classes(&self) -> &[ClassDist] {
        &self.classes
    }

    pub fn pdf_n(&self, n: usize) -> f64 {
        self.lengths.iter().find(|&&(ln, _)| ln == n).map_or(0.0, |&(_, p)| p)
    }

    pub fn sample_n(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for &(n, p) in &self.lengths {
            acc += p;
            if u < acc {
                return n;
            }
        }
        self.lengths.last().map_or(0, |&(n, _)| n)
    }

    /// Draws (tau, direction) conditioned on chain length n. None when the
    /// leaf learned nothing at that length.
    pub fn sample_tau_omega(&self, n: usize, u_tau: f64, u_dir: [f64; 3]) -> Option<(ChainType, Vec3)> {
        let total: f64 = self
            .classes
            .iter()
            .filter(|c| c.tau.len() == n)
            .map(|c| c.weight)
            .sum();
        if !(total > 0.0) {
            return None;
        }
        let mut acc = 0.0;
        let mut chosen = None;
        for c in self.classes.iter().filter(|c| c.tau.len() == n) {
            acc += c.weight / total;
            chosen = Some(c);
            if u_tau < acc {
                break;
            }
        }
        let c = chosen?;
        Some((c.tau, c.mixture.sample(u_dir)))
    }

    /// Density of sample_tau_omega at fixed n: the class weight share times
    /// the class mixture density. Zero for unlearned (n, tau).
    pub fn pdf_tau_dir(&self, tau: ChainType, omega: Vec3) -> f64 {
        let n = tau.len();
        let total: f64 = self
            .classes
            .iter()
            .filter(|c| c.tau.len() == n)
            .map(|c| c.weight)
            .sum();
        if !(total > 0.0) {
            return 0.0;
        }
        self.classes
            .iter()
            .find(|c| c.tau == tau)
            .map_or(0.0, |c| c.weight / total * c.mixture.pdf(omega))
    }

    /// Rescales every lobe by a direction-dependent factor (a separator
    /// BSDF evaluation), rebuilding the tables. None when everything
    /// reweights to zero.
    pub fn reweighted(&self, rho: impl Fn(Vec3) -> f64) -> Option<LeafDist> {
        let classes: Vec<ClassDist> = self
            .classes
            .iter()
            .filter_map(|c| {
                let lobes: Vec<(Vec3, f64, f64)> = c
                    .lobes
                    .iter()
                    .map(|&(mu, kappa, w)| (mu, kappa, w * rho(mu).max(0.0)))
                    .collect();
                let weight: f64 = lobes.iter().map(|l| l.2).sum();
                let mixture = VmfMixture::new(
                    lobes
                        .iter()
                        .map(|&(mu, kappa, w)| VmfLobe { mu, kappa, weight: w })
                        .collect(),
                )?;
                Some(ClassDist { tau: c.tau, weight, lobes, mixture })
            })
            .collect();
        LeafDist::from_classes(classes)
    }
}

#[derive(Clone, Debug)]
struct Leaf {
    real: u32,
    copies: u32,
    dist: Option<LeafDist>,
}

#[derive(Clone, Debug)]
enum Node {
    Inner { axis: u8, split: f64, left: u32, right: u32 },
    Leaf(u32),
}

/// Immutable spatial index over separator pairs; rebuilt between training
/// iterations from that iteration's samples only.
#[derive(Clone, Debug)]
pub struct GuidingTree {
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
    root: u32,
    threshold: usize,
    total: usize,
}

/// Read-only leaf diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct LeafView<'a> {
    pub real: usize,
    pub copies: usize,
    pub dist: Option<&'a LeafDist>,
}

impl GuidingTree {
    pub fn build(bounds: &Aabb, samples: Vec<SubPathSample>, params: &TreeParams) -> GuidingTree {
        let total = samples.len();
        let threshold = (total as f64).sqrt().floor().max(1.0) as usize;
        // Normalize the 6 axes by the scene bounds so they are
        // commensurable for split selection and distances.
        let extent = bounds.max - bounds.min;
        let mut norm_min = [0.0f64; 6];
        let mut norm_inv = [0.0f64; 6];
        for a in 0..6 {
            norm_min[a] = bounds.min[a % 3];
            let e = extent[a % 3];
            norm_inv[a] = if e > 0.0 { 1.0 / e } else { 0.0 };
        }
        let mut tree = GuidingTree {
            nodes: Vec::new(),
            leaves: Vec::new(),
            root: 0,
            threshold,
            total,
        };
        let ctx = BuildCtx { norm_min, norm_inv, params: *params, threshold };
        tree.root = tree.build_node(samples, &ctx, 0);
        tree
    }

    fn make_leaf(&mut self, items: Vec<SubPathSample>, ctx: &BuildCtx) -> u32 {
        let real = items.iter().filter(|s| !s.is_copy()).count() as u32;
        let copies = items.len() as u32 - real;
        let dist = fit(&items, &ctx.params);
        self.leaves.push(Leaf { real, copies, dist });
        self.nodes.push(Node::Leaf(self.leaves.len() as u32 - 1));
        self.nodes.len() as u32 - 1
    }

    fn build_node(&mut self, items: Vec<SubPathSample>, ctx: &BuildCtx, depth: usize) -> u32 {
        let real = items.iter().filter(|s| !s.is_copy()).count();
        if real <= ctx.threshold || depth > 48 {
            return self.make_leaf(items, ctx);
        }
        match split_with_copies(items, ctx) {
            // Coincident samples can exceed the occupancy threshold without
            // being spatially separable; they stay in one leaf.
            Err(items) => self.make_leaf(items, ctx),
            Ok(SplitOutcome { axis, split, left, right }) => {
                let l = self.build_node(left, ctx, depth + 1);
                let r = self.build_node(right, ctx, depth + 1);
                self.nodes.push(Node::Inner { axis, split, left: l, right: r });
                self.nodes.len() as u32 - 1
            }
        }
    }

    fn leaf_at(&self, x_d: Vec3, x_l: Vec3) -> Option<&Leaf> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [x_d.x, x_d.y, x_d.z, x_l.x, x_l.y, x_l.z];
        let mut node = self.root;
        loop {
            match &self.nodes[node as usize] {
                Node::Leaf(i) => return Some(&self.leaves[*i as usize]),
                Node::Inner { axis, split, left, right } => {
                    node = if q[*axis as usize] < *split { *left } else { *right };
                }
            }
        }
    }

    /// Fitted distribution at a separator pair; None when the containing
    /// leaf learned nothing.
    pub fn lookup(&self, x_d: Vec3, x_l: Vec3) -> Option<&LeafDist> {
        self.leaf_at(x_d, x_l)?.dist.as_ref()
    }

    /// True when the leaf at this pair holds at least one original (non-
    /// copy) sample; the activation test for selective chain sampling.
    pub fn selective_active(&self, x_d: Vec3, x_l: Vec3) -> bool {
        self.leaf_at(x_d, x_l).is_some_and(|l| l.real > 0 && l.dist.is_some())
    }

    pub fn leaves(&self) -> impl Iterator<Item = LeafView<'_>> {
        self.leaves.iter().map(|l| LeafView {
            real: l.real as usize,
            copies: l.copies as usize,
            dist: l.dist.as_ref(),
        })
    }

    pub fn occupancy_threshold(&self) -> usize {
        self.threshold
    }

    pub fn sample_count(&self) -> usize {
        self.total
    }
}

struct BuildCtx {
    norm_min: [f64; 6],
    norm_inv: [f64; 6],
    params: TreeParams,
    threshold: usize,
}

impl BuildCtx {
    fn coord(&self, s: &SubPathSample, axis: usize) -> f64 {
        (s.coord(axis) - self.norm_min[axis]) * self.norm_inv[axis]
    }

    fn point(&self, s: &SubPathSample) -> [f64; 6] {
        std::array::from_fn(|a| self.coord(s, a))
    }
}

struct SplitOutcome {
    axis: u8,
    split: f64,
    left: Vec<SubPathSample>,
    right: Vec<SubPathSample>,
}

fn bbox6(points: impl Iterator<Item = [f64; 6]>) -> ([f64; 6], [f64; 6]) {
    let mut lo = [f64::INFINITY; 6];
    let mut hi = [f64::NEG_INFINITY; 6];
    for p in points {
        for a in 0..6 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

fn box_diag(lo: &[f64; 6], hi: &[f64; 6]) -> f64 {
    (0..6).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
}

fn dist_to_box(p: &[f64; 6], lo: &[f64; 6], hi: &[f64; 6]) -> f64 {
    (0..6)
        .map(|a| (lo[a] - p[a]).max(p[a] - hi[a]).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Median split on the widest normalized axis, mirroring floor(epsilon * k)
/// boundary-nearest originals into each sibling as flagged copies. Copies
/// landing farther from the destination's sample box than that box's
/// diagonal are dropped.
fn split_with_copies(
    mut items: Vec<SubPathSample>,
    ctx: &BuildCtx,
) -> Result<SplitOutcome, Vec<SubPathSample>> {
    if items.len() < 2 {
        return Err(items);
    }
    let (lo, hi) = bbox6(items.iter().map(|s| ctx.point(s)));
    let axis = (0..6)
        .max_by(|&a, &b| {
            (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).expect("finite extents")
        })
        .expect("six axes");
    if hi[axis] - lo[axis] <= 0.0 {
        // Every sample sits at one 6d point; a split cannot separate
        // anything spatially, it would only shrink the fit's input.
        return Err(items);
    }
    // Stable sort on the coordinate keeps ties in input order, which makes
    // rebuilds reproducible.
    items.sort_by(|a, b| ctx.coord(a, axis).partial_cmp(&ctx.coord(b, axis)).expect("finite"));
    let mid = items.len() / 2;
    let split = 0.5 * (ctx.coord(&items[mid - 1], axis) + ctx.coord(&items[mid], axis));

    let real_parent = items.iter().filter(|s| !s.is_copy()).count();
    let n_copy = (ctx.params.epsilon * real_parent as f64).floor() as usize;

    let right = items.split_off(mid);
    let left = items;

    let (left_lo, left_hi) = bbox6(left.iter().map(|s| ctx.point(s)));
    let (right_lo, right_hi) = bbox6(right.iter().map(|s| ctx.point(s)));
    let left_diag = box_diag(&left_lo, &left_hi);
    let right_diag = box_diag(&right_lo, &right_hi);

    // Nearest-to-boundary originals of each side: the tail of the left
    // run and the head of the right run (both are coordinate-sorted).
    let to_right: Vec<SubPathSample> = left
        .iter()
        .rev()
        .filter(|s| !s.is_copy())
        .take(n_copy)
        .filter(|s| dist_to_box(&ctx.point(s), &right_lo, &right_hi) <= right_diag)
        .map(|s| s.as_copy())
        .collect();
    let to_left: Vec<SubPathSample> = right
        .iter()
        .filter(|s| !s.is_copy())
        .take(n_copy)
        .filter(|s| dist_to_box(&ctx.point(s), &left_lo, &left_hi) <= left_diag)
        .map(|s| s.as_copy())
        .collect();

    let mut left = left;
    let mut right = right;
    left.extend(to_left);
    right.extend(to_right);
    Ok(SplitOutcome { axis: axis as u8, split, left, right })
}

/// Fits a leaf's tables from its samples (copies included). Weights follow
/// the recorded contribution estimates; lobe concentration is the inverse
/// squared great-circle distance to the nearest same-type neighbor,
/// clamped; a lone sample in its type class gets the widest allowed lobe.
fn fit(items: &[SubPathSample], params: &TreeParams) -> Option<LeafDist> {
    let mut by_tau: std::collections::BTreeMap<u16, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, s) in items.iter().enumerate() {
        if s.weight() > 0.0 {
            by_tau.entry(s.tau().bits()).or_default().push(i);
        }
    }
    let classes: Vec<ClassDist> = by_tau
        .into_iter()
        .filter_map(|(bits, idx)| {
            let tau = ChainType::from_bits(bits)?;
            let dirs: Vec<Vec3> = idx.iter().map(|&i| items[i].omega()).collect();
            let lobes: Vec<(Vec3, f64, f64)> = idx
                .iter()
                .enumerate()
                .map(|(j, &i)| {
                    let kappa = if dirs.len() == 1 {
                        params.kappa_min
                    } else {
                        let sigma = dirs
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != j)
                            .map(|(_, d)| angle_between(dirs[j], *d))
                            .fold(f64::INFINITY, f64::min);
                        (1.0 / (sigma * sigma)).clamp(params.kappa_min, params.kappa_max)
                    };
                    (dirs[j], kappa, items[i].weight())
                })
                .collect();
            let weight: f64 = lobes.iter().map(|l| l.2).sum();
            let mixture = VmfMixture::new(
                lobes
                    .iter()
                    .map(|&(mu, kappa, w)| VmfLobe { mu, kappa, weight: w })
                    .collect(),
            )?;
            Some(ClassDist { tau, weight, lobes, mixture })
        })
        .collect();
    LeafDist::from_classes(classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::stream_rng;
    use rand::Rng;

    fn unit_bounds() -> Aabb {
        let mut b = Aabb::empty();
        b.grow(Vec3::zeros());
        b.grow(Vec3::new(1.0, 1.0, 1.0));
        b
    }

    fn sample_at(x: f64, tau: &str, weight: f64) -> SubPathSample {
        SubPathSample::new(
            Vec3::new(x, 0.5, 0.5),
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::new(0.0, 0.0, 1.0),
            weight,
            1.0,
            ChainType::parse(tau).unwrap(),
        )
    }

    fn random_sample(rng: &mut impl Rng) -> SubPathSample {
        let d = Vec3::new(
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        )
        .normalize();
        SubPathSample::new(
            Vec3::new(rng.gen(), rng.gen(), rng.gen()),
            Vec3::new(rng.gen(), rng.gen(), rng.gen()),
            d,
            rng.gen::<f64>() + 0.1,
            rng.gen::<f64>() * 4.0 + 0.5,
            if rng.gen::<bool>() { ChainType::parse("R").unwrap() } else { ChainType::parse("TT").unwrap() },
        )
    }

    #[test]
    fn record_is_forty_bytes() {
        assert_eq!(std::mem::size_of::<SubPathSample>(), 40);
    }

    #[test]
    fn record_round_trip() {
        let s = SubPathSample::new(
            Vec3::new(0.25, -1.5, 3.0),
            Vec3::new(2.0, 0.125, -0.75),
            Vec3::new(0.6, 0.0, 0.8),
            0.5,
            3.0,
            ChainType::parse("TRT").unwrap(),
        );
        assert_eq!(s.x_d(), Vec3::new(0.25, -1.5, 3.0));
        assert_eq!(s.x_l(), Vec3::new(2.0, 0.125, -0.75));
        assert!((s.omega() - Vec3::new(0.6, 0.0, 0.8)).norm() < 1e-6);
        assert_eq!(s.throughput(), 0.5);
        assert_eq!(s.recip(), 3.0);
        assert_eq!(s.tau(), ChainType::parse("TRT").unwrap());
        assert!(!s.is_copy());
        assert!(s.as_copy().is_copy());
        assert_eq!(s.as_copy().tau(), s.tau());
    }

    #[test]
    fn bf16_rounds_to_nearest_even() {
        // Exact in bf16.
        assert_eq!(bf16_to_f32(f32_to_bf16(1.0)), 1.0);
        assert_eq!(bf16_to_f32(f32_to_bf16(3.0)), 3.0);
        // 1 + 2^-8 is a tie; even mantissa wins (down to 1.0).
        assert_eq!(bf16_to_f32(f32_to_bf16(1.00390625)), 1.0);
        // 1 + 3*2^-8 is a tie; rounds up to 1 + 2^-6.
        assert_eq!(bf16_to_f32(f32_to_bf16(1.01171875)), 1.015625);
        // Relative error bounded by the 8-bit mantissa.
        let mut rng = stream_rng(&[30]);
        for _ in 0..1000 {
            let x: f32 = rng.gen::<f32>() * 100.0 + 1e-3;
            let y = bf16_to_f32(f32_to_bf16(x));
            assert!((y - x).abs() / x <= 1.0 / 256.0);
        }
    }

    #[test]
    fn leaf_occupancy_respects_square_root_threshold() {
        let mut rng = stream_rng(&[31]);
        for total in [1usize, 10, 1_000, 100_000] {
            let samples: Vec<SubPathSample> =
                (0..total).map(|_| random_sample(&mut rng)).collect();
            let tree = GuidingTree::build(&unit_bounds(), samples, &TreeParams::default());
            let cap = (total as f64).sqrt().floor() as usize;
            assert_eq!(tree.occupancy_threshold(), cap.max(1));
            let mut real_total = 0;
            for leaf in tree.leaves() {
                assert!(leaf.real <= cap.max(1), "leaf {} > cap {}", leaf.real, cap);
                real_total += leaf.real;
            }
            assert_eq!(real_total, total, "originals are partitioned, never lost");
        }
    }

    #[test]
    fn coincident_samples_stay_in_one_leaf() {
        // All records share one 6d position, so no split can separate them.
        // The occupancy threshold must not shave the fit's input here: the
        // whole set lands in a single leaf.
        let samples: Vec<SubPathSample> = (0..400)
            .map(|i| {
                SubPathSample::new(
                    Vec3::new(0.5, 0.5, 0.5),
                    Vec3::new(0.25, 0.25, 0.75),
                    Vec3::new(0.0, 0.0, 1.0),
                    1.0 + (i % 3) as f64,
                    1.0,
                    ChainType::parse(if i % 4 == 0 { "TT" } else { "R" }).unwrap(),
                )
            })
            .collect();
        let tree = GuidingTree::build(&unit_bounds(), samples, &TreeParams::default());
        assert_eq!(tree.occupancy_threshold(), 20);
        let leaves: Vec<_> = tree.leaves().collect();
        assert_eq!(leaves.len(), 1);
        assert_eq!(leaves[0].real, 400);
        assert_eq!(leaves[0].copies, 0);
        assert_eq!(leaves[0].dist.unwrap().classes().len(), 2);
    }

    #[test]
    fn rebuild_is_deterministic() {
        let mut rng = stream_rng(&[32]);
        let samples: Vec<SubPathSample> = (0..2000).map(|_| random_sample(&mut rng)).collect();
        let a = GuidingTree::build(&unit_bounds(), samples.clone(), &TreeParams::default());
        let b = GuidingTree::build(&unit_bounds(), samples, &TreeParams::default());
        let la: Vec<(usize, usize)> = a.leaves().map(|l| (l.real, l.copies)).collect();
        let lb: Vec<(usize, usize)> = b.leaves().map(|l| (l.real, l.copies)).collect();
        assert_eq!(la, lb);
        for (x, y) in a.leaves().zip(b.leaves()) {
            let (Some(dx), Some(dy)) = (x.dist, y.dist) else { continue };
            for (cx, cy) in dx.classes().iter().zip(dy.classes()) {
                assert_eq!(cx.weight().to_bits(), cy.weight().to_bits());
            }
        }
    }

    #[test]
    fn twenty_sample_split_copies_two_per_side() {
        // 20 originals spread along the first axis; one split must mirror
        // floor(0.1 * 20) = 2 boundary-nearest samples into each child.
        let items: Vec<SubPathSample> =
            (0..20).map(|i| sample_at(i as f64 / 19.0, "R", 1.0)).collect();
        let ctx = BuildCtx {
            norm_min: [0.0; 6],
            norm_inv: [1.0; 6],
            params: TreeParams::default(),
            threshold: 4,
        };
        let out = split_with_copies(items, &ctx).unwrap();
        assert_eq!(out.axis, 0);
        let left_copies: Vec<f64> = out
            .left
            .iter()
            .filter(|s| s.is_copy())
            .map(|s| s.x_d().x)
            .collect();
        let right_copies: Vec<f64> = out
            .right
            .iter()
            .filter(|s| s.is_copy())
            .map(|s| s.x_d().x)
            .collect();
        assert_eq!(left_copies.len(), 2);
        assert_eq!(right_copies.len(), 2);
        // Left child's copies are the two right-side samples nearest the
        // boundary (indices 10, 11), and vice versa.
        let near = |v: f64, i: usize| (v - i as f64 / 19.0).abs() < 1e-6;
        assert!(near(left_copies[0], 10) && near(left_copies[1], 11));
        assert!(right_copies.iter().any(|&v| near(v, 9)) && right_copies.iter().any(|&v| near(v, 8)));
        assert_eq!(out.left.iter().filter(|s| !s.is_copy()).count(), 10);
        assert_eq!(out.right.iter().filter(|s| !s.is_copy()).count(), 10);
    }

    #[test]
    fn distant_copies_are_discarded() {
        // Left cluster is tight (tiny box diagonal), so copies arriving
        // from the distant right side are dropped; the right side is wide
        // (large diagonal), so copies from the left survive there.
        let mut items: Vec<SubPathSample> = Vec::new();
        for i in 0..10 {
            items.push(sample_at(0.0001 * i as f64, "R", 1.0));
        }
        for i in 0..10 {
            items.push(sample_at(0.4 + 0.0599 * i as f64, "R", 1.0));
        }
        let ctx = BuildCtx {
            norm_min: [0.0; 6],
            norm_inv: [1.0; 6],
            params: TreeParams::default(),
            threshold: 4,
        };
        let out = split_with_copies(items, &ctx).unwrap();
        assert_eq!(out.left.iter().filter(|s| s.is_copy()).count(), 0);
        assert_eq!(out.right.iter().filter(|s| s.is_copy()).count(), 2);
    }

    #[test]
    fn copies_never_spawn_copies() {
        // A node whose boundary-nearest member is itself a copy must skip
        // it and mirror the nearest original instead.
        let mut items: Vec<SubPathSample> =
            (0..20).map(|i| sample_at(i as f64 / 19.0, "R", 1.0)).collect();
        items.push(sample_at(10.2 / 19.0, "R", 1.0).as_copy());
        let ctx = BuildCtx {
            norm_min: [0.0; 6],
            norm_inv: [1.0; 6],
            params: TreeParams::default(),
            threshold: 4,
        };
        let out = split_with_copies(items, &ctx).unwrap();
        // Sources for the left child come from the right run's originals.
        let left_copy_xs: Vec<f64> = out
            .left
            .iter()
            .filter(|s| s.is_copy())
            .map(|s| s.x_d().x)
            .collect();
        for x in left_copy_xs {
            assert!((x * 19.0).fract().abs() < 1e-4 || (x * 19.0).fract() > 0.9999);
        }
    }

    #[test]
    fn footprint_kappa_worked_examples() {
        // Two directions 0.1 rad apart: sigma' = 0.1, kappa = 100 each.
        let d1 = Vec3::new(0.0, 0.0, 1.0);
        let d2 = Vec3::new(0.1f64.sin(), 0.0, 0.1f64.cos());
        let items = vec![
            SubPathSample::new(Vec3::zeros(), Vec3::zeros(), d1, 1.0, 1.0, ChainType::parse("R").unwrap()),
            SubPathSample::new(Vec3::zeros(), Vec3::zeros(), d2, 1.0, 1.0, ChainType::parse("R").unwrap()),
        ];
        let dist = fit(&items, &TreeParams::default()).unwrap();
        let lobes = dist.classes()[0].lobes();
        assert_eq!(lobes.len(), 2);
        for &(_, kappa, _) in lobes {
            assert!((kappa - 100.0).abs() / 100.0 < 1e-4, "kappa {kappa}");
        }
        // A lone sample in its class gets kappa_min; coincident directions
        // clamp at kappa_max.
        let lone = vec![items[0]];
        let d = fit(&lone, &TreeParams::default()).unwrap();
        assert_eq!(d.classes()[0].lobes()[0].1, 10.0);
        let coincident = vec![items[0], items[0]];
        let d = fit(&coincident, &TreeParams::default()).unwrap();
        assert_eq!(d.classes()[0].lobes()[0].1, 1e6);
    }

    #[test]
    fn length_table_follows_weight_normalization() {
        // Weights {n=2: 3.0, n=3: 1.0} give P(2) = 0.75, P(3) = 0.25.
        let items = vec![
            SubPathSample::new(Vec3::zeros(), Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), 3.0, 1.0, ChainType::parse("RR").unwrap()),
            SubPathSample::new(Vec3::zeros(), Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), 1.0, 1.0, ChainType::parse("TRT").unwrap()),
        ];
        let dist = fit(&items, &TreeParams::default()).unwrap();
        assert_eq!(dist.pdf_n(2), 0.75);
        assert_eq!(dist.pdf_n(3), 0.25);
        assert_eq!(dist.pdf_n(1), 0.0);
        assert_eq!(dist.sample_n(0.5), 2);
        assert_eq!(dist.sample_n(0.9), 3);
        let probs: f64 = dist.lengths().iter().map(|&(_, p)| p).sum();
        assert!((probs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn type_table_conditions_on_length() {
        // Two length-2 classes RR (weight 3) and TT (weight 1): P(RR|2) =
        // 0.75. Sampling with u below/above that picks each class.
        let items = vec![
            SubPathSample::new(Vec3::zeros(), Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0), 3.0, 1.0, ChainType::parse("RR").unwrap()),
            SubPathSample::new(Vec3::zeros(), Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), 1.0, 1.0, ChainType::parse("TT").unwrap()),
        ];
        let dist = fit(&items, &TreeParams::default()).unwrap();
        let (tau_a, _) = dist.sample_tau_omega(2, 0.5, [0.3, 0.3, 0.3]).unwrap();
        let (tau_b, _) = dist.sample_tau_omega(2, 0.9, [0.3, 0.3, 0.3]).unwrap();
        assert_eq!(tau_a, ChainType::parse("RR").unwrap());
        assert_eq!(tau_b, ChainType::parse("TT").unwrap());
        assert!(dist.sample_tau_omega(5, 0.5, [0.1, 0.1, 0.1]).is_none());
    }

    #[test]
    fn copy_only_leaf_is_never_active() {
        let items: Vec<SubPathSample> =
            (0..3).map(|i| sample_at(i as f64 * 0.1, "R", 1.0).as_copy()).collect();
        let tree = GuidingTree::build(&unit_bounds(), items, &TreeParams::default());
        assert!(!tree.selective_active(Vec3::new(0.1, 0.5, 0.5), Vec3::new(0.5, 0.5, 0.5)));
        // The fit itself may exist (copies inform distributions), but
        // activation requires an original.
        let leaf = tree.leaves().next().unwrap();
        assert_eq!(leaf.real, 0);
        assert_eq!(leaf.copies, 3);
    }

    #[test]
    fn lookup_finds_local_distribution() {
        // Cluster A records single-bounce chains, cluster B double-bounce.
        let mut samples = Vec::new();
        for i in 0..40 {
            let x = 0.05 + 0.001 * i as f64;
            samples.push(sample_at(x, "R", 1.0));
        }
        for i in 0..40 {
            let x = 0.95 - 0.001 * i as f64;
            samples.push(sample_at(x, "TT", 1.0));
        }
        let tree = GuidingTree::build(&unit_bounds(), samples, &TreeParams::default());
        let near_a = tree.lookup(Vec3::new(0.06, 0.5, 0.5), Vec3::new(0.5, 0.5, 0.5)).unwrap();
        let near_b = tree.lookup(Vec3::new(0.94, 0.5, 0.5), Vec3::new(0.5, 0.5, 0.5)).unwrap();
        assert!(near_a.pdf_n(1) > 0.99);
        assert!(near_b.pdf_n(2) > 0.99);
    }

    #[test]
    fn product_reweighting_shifts_mass() {
        let d1 = Vec3::new(0.0, 0.0, 1.0);
        let d2 = Vec3::new(1.0, 0.0, 0.0);
        let items = vec![
            SubPathSample::new(Vec3::zeros(), Vec3::zeros(), d1, 1.0, 1.0, ChainType::parse("R").unwrap()),
            SubPathSample::new(Vec3::zeros(), Vec3::zeros(), d2, 1.0, 1.0, ChainType::parse("RR").unwrap()),
        ];
        let dist = fit(&items, &TreeParams::default()).unwrap();
        assert_eq!(dist.pdf_n(1), 0.5);
        // A separator BSDF that likes d1 and kills d2.
        let re = dist.reweighted(|mu| if mu.z > 0.5 { 2.0 } else { 0.0 }).unwrap();
        assert_eq!(re.pdf_n(1), 1.0);
        assert_eq!(re.pdf_n(2), 0.0);
        // Killing everything yields no distribution.
        assert!(dist.reweighted(|_| 0.0).is_none());
    }
}
