//! A dataset directory: `images.sigd` (all images in one `f32` tensor),
//! `labels.csv` (readable by [`load_label_csv`]) and `splits.csv`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use signa_core::dataset::{MultiLabelDataset, Split};

use crate::corpus::{load_label_csv, write_label_csv};
use crate::{container, fsutil, Error, Result};

pub const IMAGES_FILE: &str = "images.sigd";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLITS_FILE: &str = "splits.csv";

const MAGIC: &[u8] = b"SIGD1";

#[derive(Debug, Serialize, Deserialize)]
struct ImageHeader {
    count: usize,
    /// `C_img, H, W` of each image.
    shape: [usize; 3],
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRow {
    image_id: String,
    group: usize,
    split: Split,
}

pub fn encode_images(data: &MultiLabelDataset) -> Result<Vec<u8>> {
    let header = ImageHeader { count: data.len(), shape: data.image_shape, dtype: "f32le".into() };
    let payload: Vec<u8> = data.images.iter().flat_map(|v| v.to_le_bytes()).collect();
    container::encode(MAGIC, &header, &payload)
}

/// Image shape and pixels of an `images.sigd` file.
pub fn decode_images(bytes: &[u8], path: &Path) -> Result<([usize; 3], Vec<f32>)> {
    let (header, payload): (ImageHeader, _) = container::decode(MAGIC, bytes, path)?;
    if header.dtype != "f32le" {
        return Err(Error::format(path, format!("unsupported dtype {:?}", header.dtype)));
    }
    let expected = header.count * header.shape.iter().product::<usize>() * 4;
    if payload.len() != expected {
        return Err(Error::format(path, format!("payload has {} bytes, header implies {expected}", payload.len())));
    }
    let pixels = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Ok((header.shape, pixels))
}

pub fn write_dataset(data: &MultiLabelDataset, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    data.validate()?;
    fsutil::create_dir(dir)?;
    let images = dir.join(IMAGES_FILE);
    fsutil::write_bytes(&images, &encode_images(data)?)?;
    let labels = dir.join(LABELS_FILE);
    write_label_csv(&labels, &data.image_ids, &data.vocabulary, &data.labels)?;
    let splits = dir.join(SPLITS_FILE);
    let mut w = fsutil::csv_writer(&splits)?;
    for i in 0..data.len() {
        let row = SplitRow { image_id: data.image_ids[i].clone(), group: data.groups[i], split: data.splits[i] };
        w.serialize(row).map_err(|e| Error::csv(&splits, e))?;
    }
    w.flush().map_err(|e| Error::io(&splits, e))?;
    Ok(vec![images, labels, splits])
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<MultiLabelDataset> {
    let dir = dir.as_ref();
    let images_path = dir.join(IMAGES_FILE);
    let (image_shape, images) = decode_images(&fsutil::read_bytes(&images_path)?, &images_path)?;
    let table = load_label_csv(dir.join(LABELS_FILE))?;

    let splits_path = dir.join(SPLITS_FILE);
    let mut r = fsutil::csv_reader(&splits_path)?;
    let mut groups = Vec::with_capacity(table.len());
    let mut splits = Vec::with_capacity(table.len());
    for (i, row) in r.deserialize::<SplitRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(&splits_path, e))?;
        if table.image_ids.get(i) != Some(&row.image_id) {
            return Err(Error::format(&splits_path, format!("row {} names {:?}, labels.csv disagrees", i + 1, row.image_id)));
        }
        groups.push(row.group);
        splits.push(row.split);
    }
    let data = MultiLabelDataset {
        image_shape,
        images,
        labels: table.matrix,
        vocabulary: table.vocabulary,
        image_ids: table.image_ids,
        groups,
        splits,
    };
    data.validate()?;
    Ok(data)
}
