pub mod furuta;
pub mod linear;
pub mod quintic;
pub mod torsional;
