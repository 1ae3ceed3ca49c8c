//! Exact integer representation of ETH amounts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of wei in one ETH.
pub const WEI_PER_ETH: u128 = 1_000_000_000_000_000_000;

const MAX_FRACTION_DIGITS: usize = 18;

/// A non-negative ETH amount stored as integer wei.
///
/// Market arithmetic (sums of prices, market capitalization) is done on this
/// type so that totals do not drift; conversion to `f64` happens only where a
/// value enters the numerical model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Wei(pub u128);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecimalError {
    #[error("empty amount")]
    Empty,
    #[error("negative amount `{0}`")]
    Negative(String),
    #[error("invalid decimal `{0}`")]
    Invalid(String),
    #[error("more than 18 fractional digits in `{0}`")]
    TooPrecise(String),
    #[error("amount `{0}` overflows")]
    Overflow(String),
}

impl Wei {
    pub const ZERO: Wei = Wei(0);

    pub fn from_eth_whole(eth: u128) -> Wei {
        Wei(eth * WEI_PER_ETH)
    }

    /// Parses a plain decimal ETH string such as `2`, `2.0` or `0.000000000000000001`.
    pub fn from_eth_str(s: &str) -> Result<Wei, DecimalError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(DecimalError::Empty);
        }
        if s.starts_with('-') {
            return Err(DecimalError::Negative(s.to_string()));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(DecimalError::Invalid(s.to_string()));
        }
        let all_digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int_part) || !all_digits(frac_part) {
            return Err(DecimalError::Invalid(s.to_string()));
        }
        if frac_part.len() > MAX_FRACTION_DIGITS {
            return Err(DecimalError::TooPrecise(s.to_string()));
        }
        let overflow = || DecimalError::Overflow(s.to_string());
        let whole: u128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| overflow())?
        };
        let mut frac: u128 = 0;
        for b in frac_part.bytes() {
            frac = frac * 10 + u128::from(b - b'0');
        }
        for _ in frac_part.len()..MAX_FRACTION_DIGITS {
            frac *= 10;
        }
        whole
            .checked_mul(WEI_PER_ETH)
            .and_then(|w| w.checked_add(frac))
            .map(Wei)
            .ok_or_else(overflow)
    }

    /// Shortest decimal ETH string that parses back to the same amount.
    pub fn to_eth_string(self) -> String {
        let whole = self.0 / WEI_PER_ETH;
        let frac = self.0 % WEI_PER_ETH;
        if frac == 0 {
            return whole.to_string();
        }
        let digits = format!("{frac:018}");
        format!("{whole}.{}", digits.trim_end_matches('0'))
    }

    /// Correctly rounded conversion to floating-point ETH.
    pub fn to_eth_f64(self) -> f64 {
        // Parsing the exact decimal expansion gives a single rounding step.
        self.to_eth_string()
            .parse()
            .expect("decimal expansion is a valid float literal")
    }

    pub fn checked_add(self, other: Wei) -> Option<Wei> {
        self.0.checked_add(other.0).map(Wei)
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_eth_string())
    }
}

impl FromStr for Wei {
    type Err = DecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Wei::from_eth_str(s)
    }
}

impl std::iter::Sum for Wei {
    fn sum<I: Iterator<Item = Wei>>(iter: I) -> Wei {
        Wei(iter.map(|w| w.0).sum())
    }
}

// Serialized as a decimal ETH string so manifests stay human-readable.
impl Serialize for Wei {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_eth_string())
    }
}

impl<'de> Deserialize<'de> for Wei {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Wei::from_eth_str(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_whole_and_fractional_eth() {
        assert_eq!(Wei::from_eth_str("2.0").unwrap(), Wei(2 * WEI_PER_ETH));
        assert_eq!(Wei::from_eth_str("2").unwrap(), Wei(2 * WEI_PER_ETH));
        assert_eq!(Wei::from_eth_str("0.0001").unwrap(), Wei(100_000_000_000_000));
        assert_eq!(Wei::from_eth_str(".5").unwrap(), Wei(WEI_PER_ETH / 2));
        assert_eq!(Wei::from_eth_str("0.000000000000000001").unwrap(), Wei(1));
    }

    #[test]
    fn rejects_bad_amounts() {
        assert!(matches!(Wei::from_eth_str("-1"), Err(DecimalError::Negative(_))));
        assert!(matches!(Wei::from_eth_str(""), Err(DecimalError::Empty)));
        assert!(matches!(Wei::from_eth_str("1e5"), Err(DecimalError::Invalid(_))));
        assert!(matches!(Wei::from_eth_str("."), Err(DecimalError::Invalid(_))));
        assert!(matches!(
            Wei::from_eth_str("0.0000000000000000001"),
            Err(DecimalError::TooPrecise(_))
        ));
    }

    #[test]
    fn float_conversion_is_exact_for_representable_values() {
        assert_eq!(Wei::from_eth_str("159").unwrap().to_eth_f64(), 159.0);
        assert_eq!(Wei::from_eth_str("0.1").unwrap().to_eth_f64(), 0.1);
    }

    proptest! {
        #[test]
        fn string_round_trip(w in 0u128..u128::MAX / 4) {
            let s = Wei(w).to_eth_string();
            prop_assert_eq!(Wei::from_eth_str(&s).unwrap(), Wei(w));
        }
    }
}
