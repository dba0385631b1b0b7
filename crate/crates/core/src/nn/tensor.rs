use serde::{Deserialize, Serialize};

use crate::imageio::ImageBuffer;

/// Dense `channels x height x width` array, channel-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor3 {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w, "tensor data length");
        Tensor3 { c, h, w, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }
}

/// RGB image to a normalized `3 x h x w` tensor, roughly zero-mean unit-range.
pub fn image_to_tensor(img: &ImageBuffer) -> Tensor3 {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor3::zeros(3, h, w);
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            t.data[(c * h + y as usize) * w + x as usize] = (p.0[c] as f64 - 128.0) / 64.0;
        }
    }
    t
}
