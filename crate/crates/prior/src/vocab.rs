//! Token ids: `0..256` are codebook indices, 256 is BOS, `257..267` are
//! the class tokens for digits 0-9.

pub const CODEBOOK_SIZE: usize = 256;
pub const BOS: usize = 256;
pub const FIRST_CLASS: usize = 257;
pub const VOCAB_SIZE: usize = 267;

pub fn class_token(digit: u8) -> usize {
    assert!(digit < 10, "digit out of range: {digit}");
    FIRST_CLASS + digit as usize
}

pub fn digit_of(token: usize) -> Option<u8> {
    (FIRST_CLASS..VOCAB_SIZE).contains(&token).then(|| (token - FIRST_CLASS) as u8)
}

pub fn is_control(token: usize) -> bool {
    (CODEBOOK_SIZE..VOCAB_SIZE).contains(&token)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        assert_eq!(class_token(0), 257);
        assert_eq!(class_token(7), 264);
        assert_eq!(class_token(9), VOCAB_SIZE - 1);
        for d in 0..10 {
            assert_eq!(digit_of(class_token(d)), Some(d));
        }
        assert_eq!(digit_of(BOS), None);
        assert_eq!(digit_of(255), None);
        assert!(is_control(BOS) && !is_control(255));
    }
}
