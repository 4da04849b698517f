//! Versioning shared by every JSON artifact.

use crate::error::{Error, Result};

/// Version written into models, paths and reports.
pub const FORMAT_VERSION: &str = "1.0";

/// Accepts any version with the same major component as [`FORMAT_VERSION`].
pub fn check_version(found: &str) -> Result<()> {
    let major = |v: &str| v.split('.').next().unwrap_or("").to_string();
    if major(found) != major(FORMAT_VERSION) {
        return Err(Error::Schema {
            expected: FORMAT_VERSION.to_string(),
            found: found.to_string(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minor_versions_are_accepted() {
        assert!(check_version("1.0").is_ok());
        assert!(check_version("1.7").is_ok());
        assert!(matches!(check_version("2.0"), Err(Error::Schema { .. })));
        assert!(check_version("").is_err());
    }
}
