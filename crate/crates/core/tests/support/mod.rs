pub mod sturm;
