#![allow(dead_code)]

pub mod corpus;
pub mod gradcheck;
pub mod reference;
