//! Concept catalog, annotation store and activation store, with their on-disk
//! formats.
//!
//! Binary layouts (all integers little-endian):
//!
//! CEXM: `"CEXM"`, u16 version = 1, u32 image_count, then per image
//! u32 image_id, u16 H, u16 W, u32 entry_count, and per entry
//! u32 concept_id, u32 run_count, run_count x u32 canonical RLE runs.
//!
//! CEXA: `"CEXA"`, u16 version = 1, u32 unit_count, u32 image_count, u16 h,
//! u16 w, image_count x u32 image ids (ascending), then f32 values indexed
//! `[unit][image][row][col]`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{is_ident_char, is_keyword, ConceptId, LogicalForm};
use crate::masks::{rle_decode, rle_encode, BitMask, RleRuns};
use crate::scoring::ActivationVolume;

pub const MASKS_MAGIC: &[u8; 4] = b"CEXM";
pub const ACTIVATIONS_MAGIC: &[u8; 4] = b"CEXA";
pub const FORMAT_VERSION: u16 = 1;
pub const CATALOG_HEADER: &str = "concept_id,name,category";
pub const DEFAULT_MIN_SAMPLES: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Scene,
    Color,
    Part,
    Object,
    Other,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Scene,
        Category::Color,
        Category::Part,
        Category::Object,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Scene => "scene",
            Category::Color => "color",
            Category::Part => "part",
            Category::Object => "object",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub name: String,
    pub category: Category,
    /// Number of images whose mask for this concept is nonempty.
    pub support: u32,
    /// Excluded concepts stay in the table for name lookup but are never searched.
    pub searchable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConceptCatalog {
    entries: Vec<Concept>,
    by_name: HashMap<String, ConceptId>,
}

impl ConceptCatalog {
    /// Builds a catalog with dense ids assigned in iteration order.
    pub fn from_names(names: impl IntoIterator<Item = (String, Category)>) -> Result<Self> {
        let mut catalog = ConceptCatalog::default();
        for (name, category) in names {
            catalog.push(name, category)?;
        }
        Ok(catalog)
    }

    fn push(&mut self, name: String, category: Category) -> Result<ConceptId> {
        let id = ConceptId(self.entries.len() as u32);
        if self.by_name.insert(name.clone(), id).is_some() {
            return Err(Error::DuplicateName(name));
        }
        self.entries.push(Concept {
            name,
            category,
            support: 0,
            searchable: true,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ConceptId) -> Option<&Concept> {
        self.entries.get(id.0 as usize)
    }

    pub fn name(&self, id: ConceptId) -> Option<&str> {
        self.get(id).map(|c| c.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<ConceptId> {
        self.by_name.get(name).copied()
    }

    pub fn entries(&self) -> &[Concept] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ConceptId> + '_ {
        (0..self.entries.len() as u32).map(ConceptId)
    }

    /// Ids of the concepts that take part in search, ascending.
    pub fn searchable_ids(&self) -> Vec<ConceptId> {
        self.ids()
            .filter(|id| self.entries[id.0 as usize].searchable)
            .collect()
    }

    /// Fills support counts from an annotation store.
    pub fn compute_support(&mut self, store: &AnnotationStore) -> Result<()> {
        let mut counts = vec![0u32; self.entries.len()];
        for image in store.images() {
            for (&c, mask) in &image.masks {
                let slot = counts
                    .get_mut(c.0 as usize)
                    .ok_or(Error::UnknownConceptId(c.0))?;
                if !mask.is_empty() {
                    *slot += 1;
                }
            }
        }
        for (entry, n) in self.entries.iter_mut().zip(counts) {
            entry.support = n;
        }
        Ok(())
    }

    /// Fails on the first form leaf that does not name a catalog entry.
    pub fn check_form(&self, form: &LogicalForm) -> Result<()> {
        match form.concepts().into_iter().find(|c| self.get(*c).is_none()) {
            Some(c) => Err(Error::UnknownConceptId(c.0)),
            None => Ok(()),
        }
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == CATALOG_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `{CATALOG_HEADER}`"),
                })
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: lineno,
                message,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
            }
            let id: u32 = fields[0]
                .parse()
                .map_err(|_| parse_err(format!("bad concept id `{}`", fields[0])))?;
            let name = fields[1];
            if name.is_empty() || !name.chars().all(is_ident_char) || is_keyword(name) {
                return Err(parse_err(format!("invalid concept name `{name}`")));
            }
            let category: Category = fields[2].parse().map_err(parse_err)?;
            rows.push((id, name.to_string(), category));
        }
        rows.sort_by_key(|r| r.0);
        let mut catalog = ConceptCatalog::default();
        for (expected, (id, name, category)) in rows.into_iter().enumerate() {
            if id != expected as u32 {
                return Err(Error::NonDenseIds {
                    expected: expected as u32,
                    found: id,
                });
            }
            catalog.push(name, category)?;
        }
        Ok(catalog)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CATALOG_HEADER}\n");
        for (i, c) in self.entries.iter().enumerate() {
            out.push_str(&format!("{i},{},{}\n", c.name, c.category));
        }
        out
    }
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<ConceptCatalog> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ConceptCatalog::parse_csv(&text)
}

pub fn write_catalog(path: impl AsRef<Path>, catalog: &ConceptCatalog) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, catalog.to_csv()).map_err(|e| Error::io(path, e))
}

/// Drops `min_samples`-deficient concepts from the search space. Support is
/// recomputed from `store`; ids and names are retained for reporting.
pub fn filter_concepts(
    catalog: &ConceptCatalog,
    store: &AnnotationStore,
    min_samples: u32,
) -> Result<ConceptCatalog> {
    let mut out = catalog.clone();
    out.compute_support(store)?;
    for entry in &mut out.entries {
        if entry.support < min_samples {
            entry.searchable = false;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageAnnotation {
    pub image_id: u32,
    pub height: u16,
    pub width: u16,
    masks: BTreeMap<ConceptId, BitMask>,
}

impl ImageAnnotation {
    pub fn new(image_id: u32, height: u16, width: u16) -> Self {
        ImageAnnotation {
            image_id,
            height,
            width,
            masks: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> (u16, u16) {
        (self.height, self.width)
    }

    /// Stores a concept mask. Empty masks are not stored: absence already means empty.
    pub fn insert(&mut self, concept: ConceptId, mask: BitMask) -> Result<()> {
        if mask.dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: mask.dims(),
            });
        }
        if mask.is_empty() {
            self.masks.remove(&concept);
        } else {
            self.masks.insert(concept, mask);
        }
        Ok(())
    }

    pub fn mask(&self, concept: ConceptId) -> Option<&BitMask> {
        self.masks.get(&concept)
    }

    pub fn masks(&self) -> impl Iterator<Item = (ConceptId, &BitMask)> {
        self.masks.iter().map(|(&c, m)| (c, m))
    }

    /// The explanation mask of `form` on this image.
    pub fn eval(&self, form: &LogicalForm) -> Result<BitMask> {
        form.eval(&|c| self.mask(c), self.height, self.width)
    }
}

/// Annotation masks for every image, ordered by ascending image id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotationStore {
    images: Vec<ImageAnnotation>,
}

impl AnnotationStore {
    pub fn new(mut images: Vec<ImageAnnotation>) -> Result<Self> {
        images.sort_by_key(|i| i.image_id);
        if let Some(w) = images.windows(2).find(|w| w[0].image_id == w[1].image_id) {
            return Err(Error::DuplicateImage(w[0].image_id));
        }
        Ok(AnnotationStore { images })
    }

    pub fn images(&self) -> &[ImageAnnotation] {
        &self.images
    }

    pub fn image(&self, index: usize) -> &ImageAnnotation {
        &self.images[index]
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image_ids(&self) -> Vec<u32> {
        self.images.iter().map(|i| i.image_id).collect()
    }

    /// Number of images on which `form` is nonempty.
    pub fn support(&self, form: &LogicalForm) -> Result<usize> {
        let mut n = 0;
        for image in &self.images {
            if !image.eval(form)?.is_empty() {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MASKS_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.images.len() as u32).to_le_bytes());
        for image in &self.images {
            out.extend_from_slice(&image.image_id.to_le_bytes());
            out.extend_from_slice(&image.height.to_le_bytes());
            out.extend_from_slice(&image.width.to_le_bytes());
            out.extend_from_slice(&(image.masks.len() as u32).to_le_bytes());
            for (c, mask) in &image.masks {
                let runs = rle_encode(mask);
                out.extend_from_slice(&c.0.to_le_bytes());
                out.extend_from_slice(&(runs.0.len() as u32).to_le_bytes());
                for r in &runs.0 {
                    out.extend_from_slice(&r.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        rd.magic(MASKS_MAGIC, "CEXM")?;
        let image_count = rd.u32()?;
        let mut images = Vec::new();
        for _ in 0..image_count {
            let image_id = rd.u32()?;
            let height = rd.u16()?;
            let width = rd.u16()?;
            if height == 0 || width == 0 {
                return Err(Error::Corrupt(format!(
                    "image {image_id} has empty frame {height}x{width}"
                )));
            }
            let mut image = ImageAnnotation::new(image_id, height, width);
            let entries = rd.u32()?;
            for _ in 0..entries {
                let concept = ConceptId(rd.u32()?);
                let run_count = rd.u32()? as usize;
                if run_count > rd.remaining() / 4 {
                    return Err(rd.truncated());
                }
                let runs = (0..run_count).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
                let mask = rle_decode(&RleRuns(runs), height, width)?;
                if image.masks.contains_key(&concept) {
                    return Err(Error::Corrupt(format!(
                        "image {image_id} lists concept {} twice",
                        concept.0
                    )));
                }
                image.insert(concept, mask)?;
            }
            images.push(image);
        }
        rd.finish()?;
        AnnotationStore::new(images)
    }
}

pub fn load_masks(path: impl AsRef<Path>) -> Result<AnnotationStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    AnnotationStore::from_bytes(&bytes)
}

pub fn write_masks(path: impl AsRef<Path>, store: &AnnotationStore) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Low-resolution activations for every unit over a shared, ascending image list.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStore {
    height: u16,
    width: u16,
    image_ids: Vec<u32>,
    units: Vec<ActivationVolume>,
}

impl ActivationStore {
    /// Units are renumbered densely in the given order, matching the on-disk layout.
    pub fn new(
        height: u16,
        width: u16,
        image_ids: Vec<u32>,
        units: Vec<ActivationVolume>,
    ) -> Result<Self> {
        let mut order: Vec<usize> = (0..image_ids.len()).collect();
        order.sort_by_key(|&i| image_ids[i]);
        let sorted_ids: Vec<u32> = order.iter().map(|&i| image_ids[i]).collect();
        if let Some(w) = sorted_ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateImage(w[0]));
        }
        let mut out = Vec::with_capacity(units.len());
        for (u, unit) in units.into_iter().enumerate() {
            if unit.dims() != (height, width) {
                return Err(Error::DimensionMismatch {
                    expected: (height, width),
                    found: unit.dims(),
                });
            }
            if unit.grids().len() != image_ids.len() {
                return Err(Error::ImageSetMismatch(format!(
                    "unit {u} has {} grids for {} images",
                    unit.grids().len(),
                    image_ids.len()
                )));
            }
            let grids = order.iter().map(|&i| unit.grids()[i].clone()).collect();
            let unit = ActivationVolume::new(u as u32, height, width, grids)?;
            if let Some(i) = unit.first_non_finite() {
                return Err(Error::NonFiniteValue {
                    unit: u as u32,
                    image: sorted_ids[i],
                });
            }
            out.push(unit);
        }
        Ok(ActivationStore {
            height,
            width,
            image_ids: sorted_ids,
            units: out,
        })
    }

    pub fn dims(&self) -> (u16, u16) {
        (self.height, self.width)
    }

    pub fn image_ids(&self) -> &[u32] {
        &self.image_ids
    }

    pub fn units(&self) -> &[ActivationVolume] {
        &self.units
    }

    pub fn unit(&self, unit_id: u32) -> Result<&ActivationVolume> {
        self.units
            .get(unit_id as usize)
            .ok_or(Error::UnknownUnit(unit_id))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per_unit = self.image_ids.len() * self.height as usize * self.width as usize;
        let mut out = Vec::with_capacity(24 + 4 * self.image_ids.len() + 4 * per_unit * self.units.len());
        out.extend_from_slice(ACTIVATIONS_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.units.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.image_ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        for id in &self.image_ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        for unit in &self.units {
            for grid in unit.grids() {
                for v in grid {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        rd.magic(ACTIVATIONS_MAGIC, "CEXA")?;
        let unit_count = rd.u32()? as usize;
        let image_count = rd.u32()? as usize;
        let height = rd.u16()?;
        let width = rd.u16()?;
        let cells = height as usize * width as usize;
        let expected = image_count as u64 * 4 + unit_count as u64 * image_count as u64 * cells as u64 * 4;
        if expected != rd.remaining() as u64 {
            return Err(Error::LengthMismatch(format!(
                "CEXA payload should hold {expected} bytes, found {}",
                rd.remaining()
            )));
        }
        let image_ids = (0..image_count).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
        let mut units = Vec::with_capacity(unit_count);
        for u in 0..unit_count {
            let mut grids = Vec::with_capacity(image_count);
            for &image in &image_ids {
                let grid = (0..cells).map(|_| rd.f32()).collect::<Result<Vec<_>>>()?;
                if grid.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue {
                        unit: u as u32,
                        image,
                    });
                }
                grids.push(grid);
            }
            units.push(ActivationVolume::new(u as u32, height, width, grids)?);
        }
        rd.finish()?;
        ActivationStore::new(height, width, image_ids, units)
    }
}

pub fn load_activations(path: impl AsRef<Path>) -> Result<ActivationStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ActivationStore::from_bytes(&bytes)
}

pub fn write_activations(path: impl AsRef<Path>, store: &ActivationStore) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Catalog, annotations and activations loaded together and cross-validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub catalog: ConceptCatalog,
    pub annotations: AnnotationStore,
    pub activations: ActivationStore,
}

impl Dataset {
    /// Validates the image sets and mask concept ids, then fills support counts.
    pub fn new(
        mut catalog: ConceptCatalog,
        annotations: AnnotationStore,
        activations: ActivationStore,
    ) -> Result<Self> {
        let mask_ids = annotations.image_ids();
        if mask_ids != activations.image_ids() {
            let missing = mask_ids
                .iter()
                .find(|id| !activations.image_ids().contains(id))
                .or_else(|| activations.image_ids().iter().find(|id| !mask_ids.contains(id)));
            return Err(Error::ImageSetMismatch(match missing {
                Some(id) => format!("image {id} is not present in both stores"),
                None => format!(
                    "{} annotated images vs {} activation images",
                    mask_ids.len(),
                    activations.image_ids().len()
                ),
            }));
        }
        catalog.compute_support(&annotations)?;
        Ok(Dataset {
            catalog,
            annotations,
            activations,
        })
    }

    pub fn load(
        masks: impl AsRef<Path>,
        activations: impl AsRef<Path>,
        catalog: impl AsRef<Path>,
    ) -> Result<Self> {
        Dataset::new(
            load_catalog(catalog)?,
            load_masks(masks)?,
            load_activations(activations)?,
        )
    }

    pub fn filtered(&self, min_samples: u32) -> Result<ConceptCatalog> {
        filter_concepts(&self.catalog, &self.annotations, min_samples)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn truncated(&self) -> Error {
        Error::LengthMismatch(format!("file truncated at byte {}", self.bytes.len()))
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| self.truncated())?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }

    fn magic(&mut self, magic: &[u8; 4], name: &'static str) -> Result<()> {
        if self.bytes.len() < 4 || &self.bytes[..4] != magic {
            return Err(Error::BadMagic { expected: name });
        }
        self.pos = 4;
        let version = self.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionUnsupported(version));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::LengthMismatch(format!(
                "{} trailing bytes",
                self.remaining()
            )));
        }
        Ok(())
    }
}
