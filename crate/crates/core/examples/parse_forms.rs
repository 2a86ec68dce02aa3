//! Parsing, canonical printing and evaluation of logical forms.

use compexp::datastore::{Category, ConceptCatalog, ImageAnnotation};
use compexp::prelude::*;

pub fn run_example() -> Result<()> {
    let catalog = ConceptCatalog::from_names(
        ["water", "sky", "blue", "boat"].map(|n| (n.to_string(), Category::Object)),
    )?;

    // NOT binds tightest, then AND, then OR; binary operators associate left.
    for text in ["water OR sky AND NOT blue", "(water OR sky) AND NOT blue", "boat OR water OR sky"] {
        let form = parse_form(text, &catalog)?;
        println!("{text:<30} -> {} (length {})", print_form(&form, &catalog)?, form.length());
        assert_eq!(parse_form(&print_form(&form, &catalog)?, &catalog)?, form);
    }

    match parse_form("water AND (sky", &catalog) {
        Err(e) => println!("syntax error: {e}"),
        Ok(_) => unreachable!("unbalanced parenthesis must not parse"),
    }

    let mut image = ImageAnnotation::new(0, 2, 2);
    image.insert(ConceptId(0), BitMask::from_rows(&[[1u8, 1], [0, 0]]))?;
    image.insert(ConceptId(1), BitMask::from_rows(&[[0u8, 1], [1, 0]]))?;
    let mask = image.eval(&parse_form("water AND NOT sky", &catalog)?)?;
    println!("water AND NOT sky covers {} pixel(s)", mask.popcount());
    assert_eq!(mask, BitMask::from_rows(&[[1u8, 0], [0, 0]]));
    Ok(())
}

fn main() {
    run_example().expect("parse forms example");
}
