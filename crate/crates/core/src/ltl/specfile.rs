use super::{parse, Formula, LtlError};

/// Checks that a formula may be used as a runtime task specification.
pub fn validate_spec(f: &Formula) -> Result<(), LtlError> {
    if !f.is_cosafe() {
        return Err(LtlError::NotCoSafe(f.to_string()));
    }
    if f.atoms().iter().any(|a| a.is_last()) {
        return Err(LtlError::ReservedAtom);
    }
    Ok(())
}

/// Parses a specification file: one formula per line, `#` starts a comment,
/// blank lines are skipped. Order is preserved.
pub fn parse_spec_file(text: &str) -> Result<Vec<Formula>, LtlError> {
    let mut specs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f = parse(line).map_err(|source| LtlError::SpecLine { line: idx + 1, source })?;
        validate_spec(&f)?;
        specs.push(f);
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let text = "# tasks\nF a\n\n  F (a & F b)  # chained\n";
        let specs = parse_spec_file(text).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[1], parse("F (a & F b)").unwrap());
    }

    #[test]
    fn rejects_runtime_only_constructs() {
        assert!(matches!(parse_spec_file("G a"), Err(LtlError::NotCoSafe(_))));
        assert!(matches!(parse_spec_file("F last"), Err(LtlError::ReservedAtom)));
        assert!(matches!(parse_spec_file("F a\nF (a"), Err(LtlError::SpecLine { line: 2, .. })));
    }
}
