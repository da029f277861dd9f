#![allow(dead_code)]

pub mod emptiness;
pub mod transducers;
