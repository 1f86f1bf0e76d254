//! Small grayscale image toolbox: luma conversion, bilinear sampling,
//! separable Gaussian blur, the 5-point Laplacian, and sRGB-to-Lab.

use image::RgbImage;

/// Single-channel f32 image, values nominally in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayF {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayF {
    pub fn new(width: usize, height: usize) -> Self {
        GrayF { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayF { width, height, data }
    }

    /// ITU-R 601 luma, scaled to [0, 1].
    pub fn from_rgb(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = Vec::with_capacity(w * h);
        for p in img.pixels() {
            let [r, g, b] = p.0;
            data.push((0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32) / 255.0);
        }
        GrayF { width: w, height: h, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    fn get_clamped(&self, x: i64, y: i64) -> f32 {
        let x = x.clamp(0, self.width as i64 - 1) as usize;
        let y = y.clamp(0, self.height as i64 - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample at pixel coordinates; pixel (x, y) sits at (x.0, y.0).
    /// Coordinates clamp to the image rectangle.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        let v00 = self.get_clamped(x0, y0);
        let v10 = self.get_clamped(x0 + 1, y0);
        let v01 = self.get_clamped(x0, y0 + 1);
        let v11 = self.get_clamped(x0 + 1, y0 + 1);
        v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy
            + v11 * fx * fy
    }
}

/// Separable Gaussian blur with kernel radius `ceil(4 sigma)` and
/// replicated edges.
pub fn gaussian_blur(img: &GrayF, sigma: f64) -> GrayF {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let inv = -0.5 / (sigma * sigma);
    for i in -radius..=radius {
        kernel.push(((i * i) as f64 * inv).exp());
    }
    let sum: f64 = kernel.iter().sum();
    let kernel: Vec<f32> = kernel.into_iter().map(|k| (k / sum) as f32).collect();

    let (w, h) = (img.width, img.height);
    let mut tmp = GrayF::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (ki, k) in kernel.iter().enumerate() {
                let sx = x as i64 + ki as i64 - radius;
                acc += k * img.get_clamped(sx, y as i64);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = GrayF::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for (ki, k) in kernel.iter().enumerate() {
                let sy = y as i64 + ki as i64 - radius;
                acc += k * tmp.get_clamped(x as i64, sy);
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// 5-point discrete Laplacian with replicated edges.
pub fn laplacian(img: &GrayF) -> GrayF {
    let (w, h) = (img.width, img.height);
    GrayF::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as i64, y as i64);
        img.get_clamped(xi - 1, yi) + img.get_clamped(xi + 1, yi) + img.get_clamped(xi, yi - 1)
            + img.get_clamped(xi, yi + 1)
            - 4.0 * img.get(x, y)
    })
}

/// Laplacian of Gaussian response.
pub fn log_response(img: &GrayF, sigma: f64) -> GrayF {
    laplacian(&gaussian_blur(img, sigma))
}

/// sRGB (8-bit) to CIELAB under D65, L scaled to [0, 100].
pub fn rgb_to_lab(r: u8, g: u8, b: u8) -> (f32, f32, f32) {
    fn srgb_to_linear(c: f64) -> f64 {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    let rl = srgb_to_linear(r as f64 / 255.0);
    let gl = srgb_to_linear(g as f64 / 255.0);
    let bl = srgb_to_linear(b as f64 / 255.0);

    let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;

    // D65 white point.
    let (xn, yn, zn) = (0.95047, 1.0, 1.08883);
    fn f(t: f64) -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    }
    let fx = f(x / xn);
    let fy = f(y / yn);
    let fz = f(z / zn);
    (
        (116.0 * fy - 16.0) as f32,
        (500.0 * (fx - fy)) as f32,
        (200.0 * (fy - fz)) as f32,
    )
}
