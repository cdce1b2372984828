pub mod bounds;
pub mod contour;
pub mod harness;
pub mod matcore;
pub mod noise;
pub mod ingest;
