//! Urban-core extraction by DN threshold, city clusters as connected
//! components, and cluster tracking across years.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numfmt::sig6;
use crate::raster::{Grid, Header, LabelMask};

pub const DEFAULT_THRESHOLD: f64 = 55.0;
const BINARY_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct UrbanExtract {
    pub year: i32,
    pub threshold: f64,
    /// 1 where DN ≥ threshold (inside the region when masked), else 0.
    pub binary: Grid,
    pub count: u64,
    pub region_id: Option<u32>,
}

/// Binary urban grids for `grid`: one per mask region, or a single
/// unmasked one. The comparison is inclusive.
pub fn threshold_urban(
    grid: &Grid,
    threshold: f64,
    mask: Option<&LabelMask>,
    year: i32,
) -> Result<Vec<UrbanExtract>> {
    if !(threshold > 0.0 && threshold <= 63.0) {
        return Err(Error::Invalid(format!("urban threshold {threshold} outside (0, 63]")));
    }
    let h = grid.header();
    let header = Header { nodata: BINARY_NODATA, ..*h };
    let lit: Vec<bool> = (0..grid.values().len())
        .map(|i| grid.valid(i).is_some_and(|v| v >= threshold))
        .collect();
    let extract = |keep: &dyn Fn(usize) -> bool, region_id| -> Result<UrbanExtract> {
        let values: Vec<f64> = (0..lit.len()).map(|i| if lit[i] && keep(i) { 1.0 } else { 0.0 }).collect();
        let count = values.iter().filter(|&&v| v == 1.0).count() as u64;
        let mut binary = Grid::new(header, values)?;
        if let Some(crs) = grid.crs() {
            binary = binary.with_crs(crs);
        }
        Ok(UrbanExtract { year, threshold, binary, count, region_id })
    };
    match mask {
        None => Ok(vec![extract(&|_| true, None)?]),
        Some(mask) => {
            mask.ensure_applies_to(h)?;
            mask.region_ids()
                .into_iter()
                .map(|id| extract(&|i| mask.labels()[i] == id, Some(id)))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connectivity::Four => "4",
            Connectivity::Eight => "8",
        })
    }
}

impl FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Connectivity> {
        match s.trim() {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(Error::Invalid(format!("connectivity must be 4 or 8, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: u32,
    pub size: u64,
    pub bbox: BBox,
    /// Mean (row, col) of member cells.
    pub centroid: (f64, f64),
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    /// Largest first; ties by the top-left corner of the bounding box.
    pub clusters: Vec<Cluster>,
    /// Cluster id per cell, 0 for background.
    pub labels: Vec<u32>,
}

/// Labels the 1-cells of a binary grid. Cluster ids follow the sorted
/// order, starting at 1.
pub fn connected_components(binary: &Grid, connectivity: Connectivity, year: i32) -> Result<Components> {
    let (nr, nc) = (binary.header().nrows, binary.header().ncols);
    let v = binary.values();
    if let Some(i) = (0..v.len()).find(|&i| binary.valid(i).is_some_and(|x| x != 0.0 && x != 1.0)) {
        return Err(Error::Invalid(format!("binary grid holds {} at cell {i}", v[i])));
    }
    let on = |i: usize| binary.valid(i) == Some(1.0);

    let mut raw = vec![0u32; v.len()];
    let mut found: Vec<(u64, BBox, f64, f64)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..v.len() {
        if !on(start) || raw[start] != 0 {
            continue;
        }
        let label = found.len() as u32 + 1;
        raw[start] = label;
        stack.push(start);
        let (r0, c0) = (start / nc, start % nc);
        let mut bbox = BBox { row_min: r0, row_max: r0, col_min: c0, col_max: c0 };
        let (mut size, mut sr, mut sc) = (0u64, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / nc, i % nc);
            size += 1;
            sr += r as f64;
            sc += c as f64;
            bbox.row_min = bbox.row_min.min(r);
            bbox.row_max = bbox.row_max.max(r);
            bbox.col_min = bbox.col_min.min(c);
            bbox.col_max = bbox.col_max.max(c);
            for &(dr, dc) in connectivity.offsets() {
                let (rr, cc) = (r as isize + dr, c as isize + dc);
                if rr < 0 || cc < 0 || rr >= nr as isize || cc >= nc as isize {
                    continue;
                }
                let j = rr as usize * nc + cc as usize;
                if on(j) && raw[j] == 0 {
                    raw[j] = label;
                    stack.push(j);
                }
            }
        }
        found.push((size, bbox, sr, sc));
    }

    let mut order: Vec<usize> = (0..found.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (&found[a], &found[b]);
        fb.0.cmp(&fa.0)
            .then((fa.1.row_min, fa.1.col_min).cmp(&(fb.1.row_min, fb.1.col_min)))
            .then(a.cmp(&b))
    });
    let mut relabel = vec![0u32; found.len() + 1];
    let clusters = order
        .iter()
        .enumerate()
        .map(|(rank, &k)| {
            let id = rank as u32 + 1;
            relabel[k + 1] = id;
            let (size, bbox, sr, sc) = found[k];
            Cluster { id, size, bbox, centroid: (sr / size as f64, sc / size as f64), year }
        })
        .collect();
    let labels = raw.iter().map(|&l| relabel[l as usize]).collect();
    Ok(Components { clusters, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Grew,
    Merged,
    Appeared,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Grew => "grew",
            EventKind::Merged => "merged",
            EventKind::Appeared => "appeared",
        }
    }
}

/// How one cluster of `year_to` relates to the clusters of `year_from`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterEvent {
    pub year_from: i32,
    pub year_to: i32,
    pub kind: EventKind,
    /// Overlapping `year_from` cluster ids, ascending.
    pub sources: Vec<u32>,
    pub target: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearSummary {
    pub year: i32,
    pub cluster_count: usize,
    pub largest_cluster: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTimeline {
    pub events: Vec<ClusterEvent>,
    pub summaries: Vec<YearSummary>,
}

impl ClusterTimeline {
    pub fn merges(&self) -> impl Iterator<Item = &ClusterEvent> {
        self.events.iter().filter(|e| e.kind == EventKind::Merged)
    }
}

/// Links clusters of consecutive extracts by shared cells. A cluster
/// overlapped by two or more earlier clusters is a merge; one with no
/// overlap has appeared.
pub fn track_clusters(extracts: &[UrbanExtract], connectivity: Connectivity) -> Result<ClusterTimeline> {
    for w in extracts.windows(2) {
        if w[1].year <= w[0].year {
            return Err(Error::Invalid(format!("extract years out of order: {} then {}", w[0].year, w[1].year)));
        }
        w[0].binary.header().ensure_aligned(w[1].binary.header())?;
    }
    let comps: Vec<Components> = extracts
        .par_iter()
        .map(|e| connected_components(&e.binary, connectivity, e.year))
        .collect::<Result<_>>()?;

    let summaries = extracts
        .iter()
        .zip(&comps)
        .map(|(e, c)| YearSummary {
            year: e.year,
            cluster_count: c.clusters.len(),
            largest_cluster: c.clusters.first().map_or(0, |c| c.size),
        })
        .collect();

    let mut events = Vec::new();
    for (k, pair) in comps.windows(2).enumerate() {
        let (before, after) = (&pair[0], &pair[1]);
        let mut sources: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); after.clusters.len()];
        let mut continued = vec![false; before.clusters.len()];
        for (&a, &b) in before.labels.iter().zip(&after.labels) {
            if a != 0 && b != 0 {
                sources[b as usize - 1].insert(a);
                continued[a as usize - 1] = true;
            }
        }
        let (year_from, year_to) = (extracts[k].year, extracts[k + 1].year);
        if let Some(lost) = continued.iter().position(|c| !c) {
            warn!("cluster {} of {year_from} has no successor in {year_to}", lost + 1);
        }
        for (i, src) in sources.into_iter().enumerate() {
            let kind = match src.len() {
                0 => EventKind::Appeared,
                1 => EventKind::Grew,
                _ => EventKind::Merged,
            };
            events.push(ClusterEvent { year_from, year_to, kind, sources: src.into_iter().collect(), target: i as u32 + 1 });
        }
    }
    Ok(ClusterTimeline { events, summaries })
}

/// One row of the urban summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct UrbanSummaryRow {
    pub region_id: Option<u32>,
    pub year: i32,
    pub threshold: f64,
    pub count: u64,
    pub cluster_count: usize,
    pub largest_cluster: u64,
}

/// Joins extracts with their per-year cluster summaries.
pub fn urban_summary(extracts: &[UrbanExtract], timeline: &ClusterTimeline) -> Vec<UrbanSummaryRow> {
    extracts
        .iter()
        .zip(&timeline.summaries)
        .map(|(e, s)| UrbanSummaryRow {
            region_id: e.region_id,
            year: e.year,
            threshold: e.threshold,
            count: e.count,
            cluster_count: s.cluster_count,
            largest_cluster: s.largest_cluster,
        })
        .collect()
}

fn region_field(id: Option<u32>) -> String {
    id.map_or(String::new(), |v| v.to_string())
}

pub fn render_urban_summary(rows: &[UrbanSummaryRow]) -> String {
    let mut out = String::from("region_id,year,threshold,count,cluster_count,largest_cluster\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            region_field(r.region_id),
            r.year,
            sig6(r.threshold),
            r.count,
            r.cluster_count,
            r.largest_cluster
        ));
    }
    out
}

pub fn write_urban_summary(rows: &[UrbanSummaryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_urban_summary(rows)).map_err(|e| Error::io(path, e))
}

/// Timeline events of each region, sources joined by `;`.
pub fn render_timeline(timelines: &[(Option<u32>, ClusterTimeline)]) -> String {
    let mut out = String::from("region_id,year_from,year_to,kind,sources,target\n");
    for (region, t) in timelines {
        for e in &t.events {
            let sources: Vec<String> = e.sources.iter().map(u32::to_string).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                region_field(*region),
                e.year_from,
                e.year_to,
                e.kind.name(),
                sources.join(";"),
                e.target
            ));
        }
    }
    out
}

pub fn write_timeline(timelines: &[(Option<u32>, ClusterTimeline)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_timeline(timelines)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn header(nc: usize, nr: usize) -> Header {
        Header::new(nc, nr, 0.0, 0.0, 1000.0, -9999.0)
    }

    fn grid(nc: usize, nr: usize, v: Vec<f64>) -> Grid {
        Grid::new(header(nc, nr), v).unwrap()
    }

    fn binary(rows: &[&str]) -> Grid {
        let nc = rows[0].len();
        let v = rows.iter().flat_map(|r| r.chars().map(|c| if c == '#' { 1.0 } else { 0.0 })).collect();
        grid(nc, rows.len(), v)
    }

    fn extract(year: i32, rows: &[&str]) -> UrbanExtract {
        let b = binary(rows);
        let count = b.values().iter().filter(|&&v| v == 1.0).count() as u64;
        UrbanExtract { year, threshold: 55.0, binary: b, count, region_id: None }
    }

    #[test]
    fn threshold_is_inclusive() {
        let e = threshold_urban(&grid(3, 1, vec![54.0, 55.0, 56.0]), 55.0, None, 2000).unwrap();
        assert_eq!(e[0].count, 2);
        assert_eq!(e[0].binary.values(), [0.0, 1.0, 1.0]);
    }

    #[test]
    fn dark_grid_has_no_urban_cells() {
        let e = threshold_urban(&grid(4, 4, vec![0.0; 16]), 55.0, None, 2000).unwrap();
        assert_eq!(e[0].count, 0);
        assert!(e[0].binary.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_threshold_and_misaligned_mask() {
        let g = grid(2, 1, vec![1.0, 2.0]);
        assert!(threshold_urban(&g, 0.0, None, 2000).is_err());
        assert!(threshold_urban(&g, 64.0, None, 2000).is_err());
        let m = LabelMask::new(header(1, 2), vec![1, 1], [(1, "a".to_string())].into()).unwrap();
        assert!(threshold_urban(&g, 55.0, Some(&m), 2000).is_err());
    }

    #[test]
    fn counts_match_a_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<f64> = (0..1024).map(|_| if rng.gen_bool(0.05) { -9999.0 } else { rng.gen_range(0.0..63.0) }).collect();
        let labels: Vec<u32> = (0..1024).map(|_| rng.gen_range(0..=3)).collect();
        let g = grid(32, 32, vals.clone());
        let m = LabelMask::new(header(32, 32), labels.clone(), (1..=3).map(|i| (i, format!("r{i}"))).collect()).unwrap();
        let all = threshold_urban(&g, 40.0, None, 2000).unwrap();
        let want = vals.iter().filter(|&&v| v != -9999.0 && v >= 40.0).count() as u64;
        assert_eq!(all[0].count, want);
        for e in threshold_urban(&g, 40.0, Some(&m), 2000).unwrap() {
            let id = e.region_id.unwrap();
            let want = (0..1024).filter(|&i| labels[i] == id && vals[i] != -9999.0 && vals[i] >= 40.0).count() as u64;
            assert_eq!(e.count, want);
        }
    }

    #[test]
    fn single_cell_and_diagonals() {
        let c = connected_components(&binary(&["...", ".#.", "..."]), Connectivity::Eight, 2000).unwrap();
        assert_eq!(c.clusters.len(), 1);
        assert_eq!(c.clusters[0].size, 1);
        let diag = binary(&["#.", ".#"]);
        assert_eq!(connected_components(&diag, Connectivity::Eight, 2000).unwrap().clusters.len(), 1);
        assert_eq!(connected_components(&diag, Connectivity::Four, 2000).unwrap().clusters.len(), 2);
    }

    #[test]
    fn clusters_are_sorted_by_size_then_position() {
        let c = connected_components(&binary(&["#..##", "...##", "#...."]), Connectivity::Eight, 2000).unwrap();
        let got: Vec<(u32, u64, usize, usize)> =
            c.clusters.iter().map(|k| (k.id, k.size, k.bbox.row_min, k.bbox.col_min)).collect();
        assert_eq!(got, [(1, 4, 0, 3), (2, 1, 0, 0), (3, 1, 2, 0)]);
        assert_eq!(c.clusters[0].centroid, (0.5, 3.5));
    }

    /// Labels by repeated minimum propagation until nothing changes.
    fn propagation_oracle(on: &[bool], nc: usize, nr: usize) -> Vec<usize> {
        let mut lab: Vec<usize> = (0..on.len()).map(|i| if on[i] { i + 1 } else { 0 }).collect();
        loop {
            let mut changed = false;
            for i in 0..on.len() {
                if !on[i] {
                    continue;
                }
                let (r, c) = ((i / nc) as isize, (i % nc) as isize);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (rr, cc) = (r + dr, c + dc);
                        if rr < 0 || cc < 0 || rr >= nr as isize || cc >= nc as isize {
                            continue;
                        }
                        let j = rr as usize * nc + cc as usize;
                        if on[j] && lab[j] < lab[i] {
                            lab[i] = lab[j];
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                return lab;
            }
        }
    }

    #[test]
    fn partition_matches_flood_fill_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(128);
        let on: Vec<bool> = (0..128 * 128).map(|_| rng.gen_bool(0.3)).collect();
        let g = grid(128, 128, on.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        let c = connected_components(&g, Connectivity::Eight, 2000).unwrap();
        let oracle = propagation_oracle(&on, 128, 128);
        let mut fwd: HashMap<usize, u32> = HashMap::new();
        let mut back: HashMap<u32, usize> = HashMap::new();
        for i in 0..on.len() {
            assert_eq!(oracle[i] == 0, c.labels[i] == 0);
            if oracle[i] != 0 {
                assert_eq!(*fwd.entry(oracle[i]).or_insert(c.labels[i]), c.labels[i]);
                assert_eq!(*back.entry(c.labels[i]).or_insert(oracle[i]), oracle[i]);
            }
        }
        assert_eq!(fwd.len(), c.clusters.len());
        let total: u64 = c.clusters.iter().map(|k| k.size).sum();
        assert_eq!(total, on.iter().filter(|&&b| b).count() as u64);
        for k in &c.clusters {
            let (r, col) = k.centroid;
            assert!(r >= k.bbox.row_min as f64 && r <= k.bbox.row_max as f64);
            assert!(col >= k.bbox.col_min as f64 && col <= k.bbox.col_max as f64);
        }
    }

    #[test]
    fn bridged_clusters_merge() {
        let t = track_clusters(&[extract(2003, &["##...##"]), extract(2004, &["#######"])], Connectivity::Eight).unwrap();
        assert_eq!(t.events.len(), 1);
        assert_eq!(t.events[0].kind, EventKind::Merged);
        assert_eq!(t.events[0].sources, [1, 2]);
        assert_eq!(t.summaries[0].cluster_count, 2);
        assert_eq!(t.summaries[1].largest_cluster, 7);
    }

    #[test]
    fn identical_years_only_grow() {
        let rows = ["##..#", "##..#", "....."];
        let t = track_clusters(&[extract(2000, &rows), extract(2001, &rows)], Connectivity::Eight).unwrap();
        assert!(t.events.iter().all(|e| e.kind == EventKind::Grew && e.sources == [e.target]));
        assert_eq!(t.events.len(), 2);
    }

    #[test]
    fn three_year_scenario() {
        let years = [
            extract(2000, &["#.....", "......", "....#."]),
            extract(2001, &["##....", "......", "#..##."]),
            extract(2002, &["###...", "#.....", "#..###"]),
        ];
        let t = track_clusters(&years, Connectivity::Eight).unwrap();
        // 2001 clusters: 1 = top-left pair, 2 = the right pair, 3 = new bottom-left cell.
        // 2002 clusters: 1 = top-left joined with bottom-left, 2 = right triple.
        let got: Vec<(i32, EventKind, Vec<u32>, u32)> =
            t.events.iter().map(|e| (e.year_to, e.kind, e.sources.clone(), e.target)).collect();
        assert_eq!(
            got,
            [
                (2001, EventKind::Grew, vec![1], 1),
                (2001, EventKind::Grew, vec![2], 2),
                (2001, EventKind::Appeared, vec![], 3),
                (2002, EventKind::Merged, vec![1, 3], 1),
                (2002, EventKind::Grew, vec![2], 2),
            ]
        );
    }

    #[test]
    fn tracking_rejects_disorder_and_misalignment() {
        let a = extract(2001, &["#."]);
        let b = extract(2000, &["#."]);
        assert!(track_clusters(&[a.clone(), b], Connectivity::Eight).is_err());
        assert!(track_clusters(&[a, extract(2002, &["#", "."])], Connectivity::Eight).is_err());
    }

    #[test]
    fn csv_renderings() {
        let e = vec![extract(2000, &["#.#"]), extract(2001, &["###"])];
        let t = track_clusters(&e, Connectivity::Eight).unwrap();
        assert_eq!(
            render_urban_summary(&urban_summary(&e, &t)),
            "region_id,year,threshold,count,cluster_count,largest_cluster\n,2000,55,2,2,1\n,2001,55,3,1,3\n"
        );
        assert_eq!(
            render_timeline(&[(Some(4), t)]),
            "region_id,year_from,year_to,kind,sources,target\n4,2000,2001,merged,1;2,1\n"
        );
    }

    proptest! {
        #[test]
        fn raising_the_threshold_never_adds_cells(
            vals in proptest::collection::vec(0.0f64..63.0, 64), t1 in 1.0f64..63.0, t2 in 1.0f64..63.0,
        ) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let g = grid(8, 8, vals);
            let a = threshold_urban(&g, lo, None, 2000).unwrap()[0].count;
            let b = threshold_urban(&g, hi, None, 2000).unwrap()[0].count;
            prop_assert!(a >= b);
        }

        #[test]
        fn cluster_count_drops_only_through_merges(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cur: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..60.0)).collect();
            let mut extracts = Vec::new();
            for year in 2000..2006 {
                extracts.extend(threshold_urban(&grid(20, 20, cur.clone()), 55.0, None, year).unwrap());
                cur = cur.iter().map(|&v| v.max(rng.gen_range(0.0..58.0))).collect();
            }
            let t = track_clusters(&extracts, Connectivity::Eight).unwrap();
            for w in extracts.windows(2) {
                prop_assert!(w[1].count >= w[0].count);
            }
            for (k, w) in t.summaries.windows(2).enumerate() {
                let year_to = extracts[k + 1].year;
                let step = t.events.iter().filter(|e| e.year_to == year_to);
                let (merged_away, appeared) = step.fold((0, 0), |(m, a), e| match e.kind {
                    EventKind::Merged => (m + e.sources.len() - 1, a),
                    EventKind::Appeared => (m, a + 1),
                    EventKind::Grew => (m, a),
                });
                prop_assert_eq!(w[1].cluster_count, w[0].cluster_count - merged_away + appeared);
            }
        }
    }
}
