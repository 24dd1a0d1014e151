//! C99-style hexadecimal float text (`0x1.8p+1` == 3.0), exact for every
//! finite `f64`.

const MANT_BITS: u32 = 52;
const MANT_MASK: u64 = (1 << MANT_BITS) - 1;

pub fn format(v: f64) -> String {
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return format!("{sign}inf");
    }
    let exp = ((bits >> MANT_BITS) & 0x7ff) as i32;
    let mant = bits & MANT_MASK;
    if exp == 0 && mant == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, e) = if exp == 0 { (0, -1022) } else { (1, exp - 1023) };
    let digits = format!("{mant:013x}");
    let frac = digits.trim_end_matches('0');
    if frac.is_empty() {
        format!("{sign}0x{lead}p{e:+}")
    } else {
        format!("{sign}0x{lead}.{frac}p{e:+}")
    }
}

fn ldexp(mut x: f64, mut k: i32) -> f64 {
    let big = f64::from_bits(((1023 + 1000) as u64) << MANT_BITS);
    let small = f64::from_bits(((1023 - 1000) as u64) << MANT_BITS);
    while k > 1000 {
        x *= big;
        k -= 1000;
    }
    while k < -1000 {
        x *= small;
        k += 1000;
    }
    x * f64::from_bits(((1023 + k) as u64) << MANT_BITS)
}

pub fn parse(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let signed = |v: f64| if neg { -v } else { v };
    match body {
        "inf" => return Ok(signed(f64::INFINITY)),
        "nan" => return Ok(f64::NAN),
        _ => {}
    }
    let body = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))
        .ok_or_else(|| format!("`{s}` is not a hex float"))?;
    let (mantissa, exp) = body
        .split_once(['p', 'P'])
        .ok_or_else(|| format!("`{s}` has no binary exponent"))?;
    let exp: i32 = exp.parse().map_err(|_| format!("`{s}` has a bad exponent"))?;
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(format!("`{s}` has no digits"));
    }
    let digits = format!("{int}{frac}");
    let significant = digits.trim_start_matches('0');
    if significant.len() > 14 {
        return Err(format!("`{s}` has more digits than an f64 holds"));
    }
    let m = if significant.is_empty() {
        0
    } else {
        u64::from_str_radix(significant, 16).map_err(|_| format!("`{s}` has a bad hex digit"))?
    };
    if m >= 1 << 53 {
        return Err(format!("`{s}` has more digits than an f64 holds"));
    }
    if !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(format!("`{s}` has a bad hex digit"));
    }
    let shift = exp
        .checked_sub(4 * frac.len() as i32)
        .ok_or_else(|| format!("`{s}` exponent out of range"))?;
    Ok(signed(ldexp(m as f64, shift)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(format(1.0), "0x1p+0");
        assert_eq!(format(3.0), "0x1.8p+1");
        assert_eq!(format(-0.0), "-0x0p+0");
        assert_eq!(format(0.1), "0x1.999999999999ap-4");
        assert_eq!(format(f64::MIN_POSITIVE / 4.0), "0x0.4p-1022");
        assert_eq!(parse("0x1.8p+1"), Ok(3.0));
        assert_eq!(parse("-0X1P-1"), Ok(-0.5));
        assert!(parse("1.5").is_err());
        assert!(parse("0x1.g").is_err());
        assert!(parse("0x1.8").is_err());
    }

    proptest! {
        #[test]
        fn round_trips_every_finite_bit_pattern(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let back = parse(&format(v)).unwrap();
            prop_assert_eq!(back.to_bits(), bits);
        }
    }
}
