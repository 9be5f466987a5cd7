//! Canonical JSON output: sorted object keys, two-space indentation and a
//! trailing newline.

use serde::Serialize;

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json's default `Map` is a BTreeMap, so going through `Value`
    // sorts every object's keys regardless of struct field order.
    let value = serde_json::to_value(value).expect("in-memory values always serialize");
    let mut out = serde_json::to_string_pretty(&value).expect("Value always serializes");
    out.push('\n');
    out
}

/// Single-line variant used for digests.
pub fn to_canonical_compact<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("in-memory values always serialize");
    serde_json::to_string(&value).expect("Value always serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Unsorted {
        zeta: u8,
        alpha: u8,
    }

    #[test]
    fn keys_come_out_sorted() {
        let s = to_canonical_string(&Unsorted { zeta: 1, alpha: 2 });
        assert_eq!(s, "{\n  \"alpha\": 2,\n  \"zeta\": 1\n}\n");
        assert_eq!(
            to_canonical_compact(&Unsorted { zeta: 1, alpha: 2 }),
            "{\"alpha\":2,\"zeta\":1}"
        );
    }
}
