//! Flat `key=value` configuration text.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear at
//! most once; callers reject keys they do not know.

use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: IndexMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = IndexMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value, got `{line}`", i + 1)))?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(Error::config(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Removes and parses `key` if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.shift_remove(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::config(format!("line {line}: invalid value `{raw}` for `{key}`"))),
        }
    }

    pub fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    /// Fails if any key was left unconsumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.first() {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::config(format!("line {line}: unknown key `{key}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown() {
        let mut kv = KeyValues::parse("# c\na = 3\n\nb=x\n").unwrap();
        assert_eq!(kv.take::<u32>("a").unwrap(), Some(3));
        assert!(kv.take::<u32>("b").is_err());
        let mut kv = KeyValues::parse("zz=1").unwrap();
        assert_eq!(kv.take::<u32>("a").unwrap(), None);
        assert!(kv.finish().unwrap_err().to_string().contains("zz"));
        assert!(KeyValues::parse("a=1\na=2").is_err());
        assert!(KeyValues::parse("novalue").is_err());
    }
}
