#![no_main]

use libfuzzer_sys::fuzz_target;
use tensor_inference::io::{form_from_csv, form_to_csv};
use tensor_inference::Shape;

// First byte picks the order, the next ones the dimensions.
fuzz_target!(|data: &[u8]| {
    let Some((&head, rest)) = data.split_first() else { return };
    let order = 1 + (head % 4) as usize;
    if rest.len() < order {
        return;
    }
    let dims = rest[..order].iter().map(|b| 1 + (*b % 16) as usize).collect();
    let Ok(shape) = Shape::new(dims) else { return };
    let Ok(text) = std::str::from_utf8(&rest[order..]) else { return };
    if let Ok(form) = form_from_csv(text, &shape) {
        let again = form_from_csv(&form_to_csv(&form), &shape).expect("written form must parse");
        assert_eq!(again.entries(), form.entries());
    }
});
