//! EAN-13 barcode decoding and product lookup.

mod catalog;
mod ean13;

pub use catalog::{lookup, Catalog, CatalogError, LookupOutcome, ProductRecord, RemoteCatalog};
pub use ean13::{
    checksum_digit, decode_image, decode_scanline, encode_scanline, render_symbol,
    symbol_modules, BarcodeError, DigitString, Scanline, ROW_FRACTIONS,
};
