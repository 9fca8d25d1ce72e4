//! Rewriting of global array accesses into staged (shared-memory) indices.
//!
//! A canonical global access has one term per axis of the form
//! `<thread index> + <loop offset> [± displacement]`, e.g.
//! `Iin[i+ii-1, j+jj+2, k+tt]`. Because the whole input box is staged, the
//! block offset folded into `i`/`j`/`k` is dropped: the axis becomes the
//! block-local thread index plus the halo shift plus the displacement.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::codegen::CodegenError;

const GLOBAL: [&str; 3] = ["i", "j", "k"];
const LOOP: [&str; 3] = ["ii", "jj", "tt"];
const THREAD: [&str; 3] = ["thx", "thy", "tht"];

/// A parsed canonical access: array name and per-axis displacement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalAccess {
    pub array: String,
    pub displacement: Vec<i32>,
}

fn non_canonical(expr: &str) -> CodegenError {
    CodegenError::NonCanonicalAccess(String::from(expr))
}

fn parse_term(term: &str, axis: usize, expr: &str) -> Result<i32, CodegenError> {
    let t: String = term.chars().filter(|c| !c.is_whitespace()).collect();
    let head = format!("{}+{}", GLOBAL[axis], LOOP[axis]);
    let rest = t
        .strip_prefix(head.as_str())
        .ok_or_else(|| non_canonical(expr))?;
    if rest.is_empty() {
        return Ok(0);
    }
    let (sign, digits) = match rest.as_bytes()[0] {
        b'+' => (1, &rest[1..]),
        b'-' => (-1, &rest[1..]),
        _ => return Err(non_canonical(expr)),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(non_canonical(expr));
    }
    let v: i32 = digits.parse().map_err(|_| non_canonical(expr))?;
    Ok(sign * v)
}

/// Parses `NAME[i+ii±a, j+jj±b]` or `NAME[i+ii±a, j+jj±b, k+tt±c]`.
pub fn parse_access(expr: &str) -> Result<GlobalAccess, CodegenError> {
    let e = expr.trim();
    let open = e.find('[').ok_or_else(|| non_canonical(expr))?;
    let inner = e[open + 1..]
        .strip_suffix(']')
        .ok_or_else(|| non_canonical(expr))?;
    let array = e[..open].trim();
    let ident = !array.is_empty()
        && array.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !array.as_bytes()[0].is_ascii_digit();
    if !ident || inner.contains('[') {
        return Err(non_canonical(expr));
    }
    let terms: Vec<&str> = inner.split(',').collect();
    if !(2..=3).contains(&terms.len()) {
        return Err(non_canonical(expr));
    }
    let displacement = terms
        .iter()
        .enumerate()
        .map(|(axis, t)| parse_term(t, axis, expr))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GlobalAccess {
        array: String::from(array),
        displacement,
    })
}

/// `thx+ii+c` with the constant omitted when zero.
pub fn staged_term(axis: usize, offset: i32) -> String {
    match offset {
        0 => format!("{}+{}", THREAD[axis], LOOP[axis]),
        o if o > 0 => format!("{}+{}+{}", THREAD[axis], LOOP[axis], o),
        o => format!("{}+{}-{}", THREAD[axis], LOOP[axis], -o),
    }
}

/// Staged index expression for `offsets` (halo shift already added).
pub fn staged_index(array: &str, offsets: &[i32]) -> String {
    let terms: Vec<String> = offsets
        .iter()
        .enumerate()
        .map(|(a, &o)| staged_term(a, o))
        .collect();
    format!("{}[{}]", array, terms.join(", "))
}

/// `in[i+ii+dx, j+jj+dy]` → `staged[thx+ii+(shx+dx), thy+jj+(shy+dy)]`.
pub fn rewrite_access(expr: &str, staged: &str, shift: [i32; 3]) -> Result<String, CodegenError> {
    let a = parse_access(expr)?;
    let offsets: Vec<i32> = a
        .displacement
        .iter()
        .enumerate()
        .map(|(axis, d)| d + shift[axis])
        .collect();
    Ok(staged_index(staged, &offsets))
}
