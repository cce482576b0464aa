pub mod platoon;
pub mod power;
pub mod random;
pub mod report;
pub mod scenario;
pub mod suites;
pub mod svg;
pub mod sweep;
