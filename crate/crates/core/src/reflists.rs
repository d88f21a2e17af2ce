//! Forward/backward partition of the available references and
//! distance-ordered list construction.
//!
//! Frames above the current one in raster order are forward references,
//! frames below (including the center when the current frame precedes it
//! in raster order) are backward references. Each list is sorted by the
//! Euclidean distance between view coordinates; a short direction borrows
//! the nearest unused frames of the other direction, appended after the
//! native entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::CodingSchedule;
use crate::view_grid::{GridGeometry, Poc, PocMap, ViewCoord};

/// Forward/backward split of an available reference set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionPartition {
    pub forward: Vec<Poc>,
    pub backward: Vec<Poc>,
}

/// The two reference lists of a bi-predicted frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceLists {
    pub list0: Vec<Poc>,
    pub list1: Vec<Poc>,
}

/// How "above" and "below" are decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectionRule {
    /// Raster precedence over the POC assignment order.
    #[default]
    Raster,
    /// Strict row comparison: smaller y coordinate rows are forward.
    StrictRow,
}

/// Splits `available` into forward and backward references of `cur`.
pub fn partition_directions(
    cur: Poc,
    available: &[Poc],
    geom: &GridGeometry,
    map: &PocMap,
    rule: DirectionRule,
) -> Result<DirectionPartition> {
    let cur_key = map.raster_key(cur)?;
    let cur_coord = geom.cell_to_coord(map.cell_of(cur)?);
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    for &poc in available {
        let is_forward = match rule {
            DirectionRule::Raster => map.raster_key(poc)? < cur_key,
            DirectionRule::StrictRow => {
                let c = geom.cell_to_coord(map.cell_of(poc)?);
                c.y > cur_coord.y
            }
        };
        if is_forward {
            forward.push(poc);
        } else {
            backward.push(poc);
        }
    }
    Ok(DirectionPartition { forward, backward })
}

/// Sort key: squared distance (exact in integers), then absolute POC
/// difference, then the POC itself. The tie-break keeps list construction
/// bit-exact across runs.
fn sort_by_distance(
    pocs: &mut [Poc],
    cur: Poc,
    cur_coord: ViewCoord,
    geom: &GridGeometry,
    map: &PocMap,
) {
    pocs.sort_by_key(|&p| {
        let coord = map
            .cell_of(p)
            .map(|cell| geom.cell_to_coord(cell))
            .unwrap_or(cur_coord);
        let d2 = coord.dist2(cur_coord);
        let dpoc = (p as i64 - cur as i64).unsigned_abs();
        (d2, dpoc, p)
    });
}

/// Builds list0/list1 from a direction partition.
pub fn build_lists(
    cur: Poc,
    partition: &DirectionPartition,
    n_per_list: usize,
    geom: &GridGeometry,
    map: &PocMap,
) -> Result<ReferenceLists> {
    if n_per_list == 0 {
        return Err(Error::Config("n_per_list must be at least 1".into()));
    }
    if partition.forward.is_empty() && partition.backward.is_empty() {
        return Err(Error::Scheduling(format!(
            "no available references for inter frame {cur}"
        )));
    }
    let cur_coord = geom.cell_to_coord(map.cell_of(cur)?);
    let mut forward = partition.forward.clone();
    let mut backward = partition.backward.clone();
    sort_by_distance(&mut forward, cur, cur_coord, geom, map);
    sort_by_distance(&mut backward, cur, cur_coord, geom, map);

    let fill = |native: &[Poc], other: &[Poc]| -> Vec<Poc> {
        let mut list: Vec<Poc> = native.iter().copied().take(n_per_list).collect();
        // Borrow the other direction's nearest unused entries, after the
        // native ones, keeping their own distance order.
        for &p in other {
            if list.len() >= n_per_list {
                break;
            }
            if !list.contains(&p) {
                list.push(p);
            }
        }
        list
    };
    Ok(ReferenceLists {
        list0: fill(&forward, &backward),
        list1: fill(&backward, &forward),
    })
}

/// Fills the `list0`/`list1` hints of every inter frame in a schedule.
pub fn populate_lists(schedule: &mut CodingSchedule, n_per_list: usize) -> Result<()> {
    let geom = schedule.geometry.clone();
    let map = crate::view_grid::assign_poc(&geom)?;
    let pocs: Vec<Poc> = schedule.frames.iter().map(|f| f.poc).collect();
    for poc in pocs {
        let rps = schedule.frame(poc)?.rps.clone();
        if poc == 0 || rps.is_empty() {
            continue;
        }
        let partition = partition_directions(poc, &rps, &geom, &map, DirectionRule::Raster)?;
        let lists = build_lists(poc, &partition, n_per_list, &geom, &map)?;
        schedule.set_lists(poc, lists.list0, lists.list1)?;
    }
    Ok(())
}
