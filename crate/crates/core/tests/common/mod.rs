#![allow(dead_code)]

pub mod prompts;
