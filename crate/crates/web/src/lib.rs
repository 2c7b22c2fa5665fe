//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exported: a torsional tracking run for a chosen
//! barrier width, a raw double-integrator run for exploring reaching time
//! and barrier level, and a Riccati solve. The plain-Rust halves live in
//! [`demo`] so they can be tested natively.

use wasm_bindgen::prelude::*;

pub mod demo;

/// Sampled time series handed to JavaScript.
#[wasm_bindgen]
pub struct Series {
    inner: demo::RunData,
}

#[wasm_bindgen]
impl Series {
    #[wasm_bindgen(getter)]
    pub fn t(&self) -> Vec<f64> {
        self.inner.t.clone()
    }

    /// Primary trajectory: rotor angle, or `x1` for the raw chain.
    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.inner.y.clone()
    }

    /// Reference for `y` (zero for the raw chain).
    #[wasm_bindgen(getter)]
    pub fn reference(&self) -> Vec<f64> {
        self.inner.reference.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn v(&self) -> Vec<f64> {
        self.inner.v.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn lambda(&self) -> Vec<f64> {
        self.inner.lambda.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn u(&self) -> Vec<f64> {
        self.inner.u.clone()
    }

    /// Switch time, or NaN if the run never switched.
    #[wasm_bindgen(getter)]
    pub fn t1(&self) -> f64 {
        self.inner.t1.unwrap_or(f64::NAN)
    }

    #[wasm_bindgen(getter)]
    pub fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[wasm_bindgen(getter)]
    pub fn alpha_max(&self) -> f64 {
        self.inner.alpha_max
    }

    /// Empty when the run completed, otherwise why it stopped.
    #[wasm_bindgen(getter)]
    pub fn status(&self) -> String {
        self.inner.status.clone()
    }
}

#[wasm_bindgen]
pub struct Riccati {
    inner: demo::AreData,
}

#[wasm_bindgen]
impl Riccati {
    /// Row-major `P`.
    #[wasm_bindgen(getter)]
    pub fn p(&self) -> Vec<f64> {
        self.inner.p.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn n(&self) -> usize {
        self.inner.n
    }

    #[wasm_bindgen(getter)]
    pub fn residual(&self) -> f64 {
        self.inner.residual
    }

    #[wasm_bindgen(getter)]
    pub fn lambda_min(&self) -> f64 {
        self.inner.lambda_min
    }

    #[wasm_bindgen(getter)]
    pub fn lambda_max(&self) -> f64 {
        self.inner.lambda_max
    }

    /// NaN for `n = 1`.
    #[wasm_bindgen(getter)]
    pub fn alpha_max(&self) -> f64 {
        self.inner.alpha_max.unwrap_or(f64::NAN)
    }
}

#[wasm_bindgen]
pub fn torsional(epsilon: f64, alpha: f64, dt: f64) -> Result<Series, JsError> {
    demo::torsional(epsilon, alpha, dt)
        .map(|inner| Series { inner })
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn raw_chain(x1: f64, m: f64, epsilon: f64, t_final: f64) -> Result<Series, JsError> {
    demo::raw_chain(x1, m, epsilon, t_final)
        .map(|inner| Series { inner })
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn riccati(n: usize, gamma: f64) -> Result<Riccati, JsError> {
    demo::riccati(n, gamma)
        .map(|inner| Riccati { inner })
        .map_err(|e| JsError::new(&e))
}
