//! Frame decoding and preprocessing. Images are `[3, H, W]` tensors with
//! intensities on the 0–255 scale.

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::DOWNSAMPLING;
use crate::tensor::Tensor;

/// Per-channel means of the training images, 0–255 scale.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanRgb(pub [f64; 3]);

/// Decodes a PNG (or any format the decoder recognizes). Grayscale frames are
/// replicated into three channels.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            msg: other.to_string(),
        },
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (x, y, px) in rgb.enumerate_pixels() {
        let idx = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * h * w + idx] = f64::from(px[c]);
        }
    }
    Tensor::new(vec![3, h, w], data)
}

/// Writes a `[3, H, W]` tensor as an 8-bit RGB PNG, rounding and clamping
/// to 0–255.
pub fn save_png(path: &Path, img: &Tensor) -> Result<()> {
    let (h, w) = match *img.shape() {
        [3, h, w] => (h, w),
        _ => return Err(Error::invalid("save_png", format!("expected [3, H, W], got {:?}", img.shape()))),
    };
    let d = img.data();
    let buf = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let idx = y as usize * w + x as usize;
        let px = |c: usize| d[c * h * w + idx].round().clamp(0.0, 255.0) as u8;
        image::Rgb([px(0), px(1), px(2)])
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Bilinear resampling with pixel-center alignment; edge pixels are
/// clamped. Same-size resampling returns the input unchanged.
pub fn bilinear_resize(img: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (c, h, w) = match *img.shape() {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::invalid("bilinear_resize", format!("expected [C, H, W], got {:?}", img.shape()))),
    };
    if height == 0 || width == 0 {
        return Err(Error::invalid("bilinear_resize", "target extents must be positive"));
    }
    if (h, w) == (height, width) {
        return Ok(img.clone());
    }
    let taps = |dst: usize, src_len: usize, dst_len: usize| -> (usize, usize, f64) {
        let scale = src_len as f64 / dst_len as f64;
        let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };
    let rows: Vec<_> = (0..height).map(|y| taps(y, h, height)).collect();
    let cols: Vec<_> = (0..width).map(|x| taps(x, w, width)).collect();
    let src = img.data();
    let mut out = Vec::with_capacity(c * height * width);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &rows {
            for &(x0, x1, fx) in &cols {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![c, height, width], out)
}

/// Resizes to `target` (multiples of 64) and subtracts the channel means.
pub fn preprocess_image(img: &Tensor, mean: &MeanRgb, target: (usize, usize)) -> Result<Tensor> {
    let (th, tw) = target;
    if th == 0 || tw == 0 || th % DOWNSAMPLING != 0 || tw % DOWNSAMPLING != 0 {
        return Err(Error::invalid(
            "preprocess_image",
            format!("target {th}x{tw} is not a positive multiple of {DOWNSAMPLING}"),
        ));
    }
    if img.shape().first() != Some(&3) {
        return Err(Error::invalid("preprocess_image", format!("expected [3, H, W], got {:?}", img.shape())));
    }
    let mut out = bilinear_resize(img, th, tw)?;
    let plane = th * tw;
    for (ch, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
        let m = mean.0[ch];
        chunk.iter_mut().for_each(|v| *v -= m);
    }
    Ok(out)
}

/// Channel concatenation: `prev` in channels 0–2, `next` in 3–5.
pub fn make_pair(prev: &Tensor, next: &Tensor) -> Result<Tensor> {
    if prev.shape() != next.shape() || prev.rank() != 3 || prev.shape()[0] != 3 {
        return Err(Error::shape("make_pair", prev.shape(), next.shape()));
    }
    let mut data = Vec::with_capacity(prev.len() * 2);
    data.extend_from_slice(prev.data());
    data.extend_from_slice(next.data());
    let [_, h, w] = [prev.shape()[0], prev.shape()[1], prev.shape()[2]];
    Tensor::new(vec![6, h, w], data)
}

/// Inverse of [`make_pair`].
pub fn unstack_pair(pair: &Tensor) -> Result<(Tensor, Tensor)> {
    let (h, w) = match *pair.shape() {
        [6, h, w] => (h, w),
        _ => return Err(Error::invalid("unstack_pair", format!("expected [6, H, W], got {:?}", pair.shape()))),
    };
    let (a, b) = pair.data().split_at(3 * h * w);
    Ok((Tensor::new(vec![3, h, w], a.to_vec())?, Tensor::new(vec![3, h, w], b.to_vec())?))
}

/// Streaming per-channel mean over every pixel of every image.
pub fn compute_mean_rgb<'a>(images: impl IntoIterator<Item = &'a Tensor>) -> Result<MeanRgb> {
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for img in images {
        if img.rank() != 3 || img.shape()[0] != 3 {
            return Err(Error::invalid("compute_mean_rgb", format!("expected [3, H, W], got {:?}", img.shape())));
        }
        let plane = img.shape()[1] * img.shape()[2];
        for (ch, chunk) in img.data().chunks(plane).enumerate() {
            sums[ch] += chunk.iter().sum::<f64>();
        }
        count += plane;
    }
    if count == 0 {
        return Err(Error::invalid("compute_mean_rgb", "no images"));
    }
    let mean = sums.map(|s| s / count as f64);
    if mean.iter().any(|m| !(0.0..=255.0).contains(m)) {
        return Err(Error::invalid("compute_mean_rgb", format!("means {mean:?} outside 0–255")));
    }
    Ok(MeanRgb(mean))
}
