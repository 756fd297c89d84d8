//! Embedded, read-only ordered store holding every access-model layout.
//!
//! After [`Store::build`] the store is immutable. All scan primitives take a
//! caller-owned [`CostCounters`] so concurrent readers never share mutable
//! state.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::ops::{AddAssign, Bound};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellCoord, GridConfig, GridError, HashKey, Point};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("duplicate entity id {0}")]
    DuplicateId(u64),
    #[error("entity {id}: {source}")]
    OutOfWorld { id: u64, source: GridError },
    #[error("inverted range [{lo}, {hi}]")]
    InvertedRange { lo: u64, hi: u64 },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("store holds at most {max} entities", max = u32::MAX)]
    TooLarge,
    #[error("entity {0}: payload is not valid UTF-8 and cannot be written as CSV")]
    BinaryPayload(u64),
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Identified payload at a world point.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: u64,
    pub point: Point,
    pub payload: Vec<u8>,
}

impl Entity {
    pub fn new(id: u64, point: Point, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            id,
            point,
            payload: payload.into(),
        }
    }
}

/// Cell hash with the entity id as tiebreaker; ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StoreKey {
    pub hash: HashKey,
    pub id: u64,
}

/// Per-query cost instrumentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CostCounters {
    /// Store calls issued.
    pub queries_issued: u64,
    /// Entities examined, including ones filtered out afterwards.
    pub entries_scanned: u64,
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.queries_issued += rhs.queries_issued;
        self.entries_scanned += rhs.entries_scanned;
    }
}

impl CostCounters {
    fn record(&mut self, scanned: usize) {
        self.queries_issued += 1;
        self.entries_scanned += scanned as u64;
    }
}

#[derive(Debug)]
pub struct Store {
    cfg: GridConfig,
    entities: Vec<Entity>,
    gaia: BTreeMap<StoreKey, u32>,
    grid: BTreeMap<CellCoord, Vec<u32>>,
    // (x column, id)
    projection: BTreeMap<(u64, u64), u32>,
}

impl Store {
    /// Indexes `entities` under all four layouts.
    pub fn build(entities: Vec<Entity>, cfg: GridConfig) -> Result<Self, StoreError> {
        if entities.len() > u32::MAX as usize {
            return Err(StoreError::TooLarge);
        }
        let mut seen = HashSet::with_capacity(entities.len());
        let mut gaia = BTreeMap::new();
        let mut grid: BTreeMap<CellCoord, Vec<u32>> = BTreeMap::new();
        let mut projection = BTreeMap::new();
        for (idx, e) in entities.iter().enumerate() {
            if !seen.insert(e.id) {
                return Err(StoreError::DuplicateId(e.id));
            }
            let cell = cfg
                .cell_of(e.point)
                .map_err(|source| StoreError::OutOfWorld { id: e.id, source })?;
            let hash = cfg.hash_of_cell(cell)?;
            let idx = idx as u32;
            gaia.insert(StoreKey { hash, id: e.id }, idx);
            grid.entry(cell).or_default().push(idx);
            projection.insert((cell.cx, e.id), idx);
        }
        for bucket in grid.values_mut() {
            bucket.sort_by_key(|&i| entities[i as usize].id);
        }
        Ok(Self {
            cfg,
            entities,
            gaia,
            grid,
            projection,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    /// Entities in load order (the RAW layout).
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Entry counts of the (raw, projection, grid, gaia) layouts.
    pub fn layout_sizes(&self) -> [usize; 4] {
        [
            self.entities.len(),
            self.projection.len(),
            self.grid.values().map(Vec::len).sum(),
            self.gaia.len(),
        ]
    }

    /// Entities whose cell hash lies in `[key_lo, key_hi]`, in [`StoreKey`] order.
    pub fn range_scan(&self, key_lo: HashKey, key_hi: HashKey, counters: &mut CostCounters) -> Result<Vec<Entity>, StoreError> {
        if key_lo > key_hi {
            return Err(StoreError::InvertedRange { lo: key_lo.0, hi: key_hi.0 });
        }
        let lo = StoreKey { hash: key_lo, id: 0 };
        let hi = StoreKey {
            hash: key_hi,
            id: u64::MAX,
        };
        let out: Vec<Entity> = self
            .gaia
            .range((Bound::Included(lo), Bound::Included(hi)))
            .map(|(_, &i)| self.entities[i as usize].clone())
            .collect();
        counters.record(out.len());
        Ok(out)
    }

    /// Contents of one cell bucket.
    pub fn cell_get(&self, cc: CellCoord, counters: &mut CostCounters) -> Result<Vec<Entity>, StoreError> {
        self.cfg.hash_of_cell(cc)?;
        let out: Vec<Entity> = self
            .grid
            .get(&cc)
            .map(|bucket| bucket.iter().map(|&i| self.entities[i as usize].clone()).collect())
            .unwrap_or_default();
        counters.record(out.len());
        Ok(out)
    }

    /// Every entity whose x column lies in `[col_lo, col_hi]`: a full
    /// vertical band of the world.
    pub fn projection_scan(&self, col_lo: u64, col_hi: u64, counters: &mut CostCounters) -> Result<Vec<Entity>, StoreError> {
        if col_lo > col_hi {
            return Err(StoreError::InvertedRange { lo: col_lo, hi: col_hi });
        }
        let out: Vec<Entity> = self
            .projection
            .range((col_lo, 0)..=(col_hi, u64::MAX))
            .map(|(_, &i)| self.entities[i as usize].clone())
            .collect();
        counters.record(out.len());
        Ok(out)
    }

    pub fn full_scan(&self, counters: &mut CostCounters) -> Vec<Entity> {
        counters.record(self.entities.len());
        self.entities.clone()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EntityRow {
    id: u64,
    x: f64,
    y: f64,
    payload: String,
}

/// Reads a dataset CSV (`id,x,y,payload`) preserving file order.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Entity>, StoreError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: EntityRow = row?;
        out.push(Entity::new(row.id, Point::new(row.x, row.y), row.payload.into_bytes()));
    }
    Ok(out)
}

pub fn write_csv<W: Write>(writer: W, entities: &[Entity]) -> Result<(), StoreError> {
    let mut wtr = csv::Writer::from_writer(writer);
    // header is written explicitly so empty datasets still carry it
    wtr.write_record(["id", "x", "y", "payload"])?;
    for e in entities {
        let payload = std::str::from_utf8(&e.payload).map_err(|_| StoreError::BinaryPayload(e.id))?;
        wtr.write_record([
            e.id.to_string(),
            e.point.x.to_string(),
            e.point.y.to_string(),
            payload.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Entity>, StoreError> {
    read_csv(File::open(path)?)
}

pub fn save_csv(path: impl AsRef<Path>, entities: &[Entity]) -> Result<(), StoreError> {
    write_csv(File::create(path)?, entities)
}
