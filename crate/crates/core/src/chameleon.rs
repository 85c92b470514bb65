//! Discrete-log chameleon hash.
//!
//! `CH(m, r) = g^H(m) * hk^r mod p` over an order-`q` subgroup of `Z_p^*`,
//! where `hk = g^td`. Knowing `td` lets the holder find `r'` such that
//! `CH(m', r') = CH(m, r)` for any `m'`.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::encoding::{decimal, hex_biguint};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChameleonError {
    #[error("invalid group parameters: {0}")]
    InvalidParams(&'static str),
    #[error("randomness is not below the group order")]
    InvalidRandomness,
    #[error("key pair carries no trapdoor")]
    MissingTrapdoor,
    #[error("malformed trapdoor encoding")]
    MalformedTrapdoor,
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamProfile {
    /// p = 23, q = 11, g = 4. Small enough to enumerate.
    Test,
    /// 2048-bit p with a 256-bit prime-order subgroup.
    Default,
}

// Schnorr group: q prime (256 bits), p = k*q + 1 prime (2048 bits), g = h^((p-1)/q).
const DEFAULT_P: &str = "26666899246463235078395254223649263660488294785997200206079316430773618551374580107362519492750877088048080680706981724036702356793753616625652290267918443178476588526087865747888484513485555486271955811251155810995145185849756729309210186512709297910983865488820712740033556347805685225575889126375664710682772753278802010049427910236475795873862456253257704233426925764719794882374591621791150783887136237596292928974343087965384716296027554563522286532258632355275110222909133147991143169702808168016714953172335737541123343323167961993401722827445970641544719042319839927661314312352150607623992580029341957886967";
const DEFAULT_Q: &str =
    "107634355518964614246164796311764297329586244038161767662254333379879349231279";
const DEFAULT_G: &str = "17653341548185208922598818004471503936891752519718781659373859574998649737617225178608489920852755413823168439662972310979984217584747733599825924347575507165358745268824034601943966972681068202258171815736652426415087330875355057232732982036527362354181042381129962872119835794556721201850406331038194455091283047648873826209503438255178581631774366654042925404207526526755879720078673270522081584165113056771478403677706959060133378351296019559668908768879316240995026586872537300233848102385851809654500217943684505109865068805715331035189643045312337507050304785441902721141349426093779089355148668479105357363450";

/// A prime-order subgroup of `Z_p^*`. Serialized as decimal strings.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    #[serde(with = "decimal")]
    pub p: BigUint,
    #[serde(with = "decimal")]
    pub q: BigUint,
    #[serde(with = "decimal")]
    pub g: BigUint,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "GroupParams {{ p: {} bits, q: {} bits }}",
            self.p.bits(),
            self.q.bits()
        )
    }
}

impl GroupParams {
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self, ChameleonError> {
        let params = Self { p, q, g };
        params.validate()?;
        Ok(params)
    }

    pub fn profile(profile: ParamProfile) -> Self {
        match profile {
            ParamProfile::Test => Self {
                p: BigUint::from(23u32),
                q: BigUint::from(11u32),
                g: BigUint::from(4u32),
            },
            ParamProfile::Default => Self {
                p: DEFAULT_P.parse().expect("constant"),
                q: DEFAULT_Q.parse().expect("constant"),
                g: DEFAULT_G.parse().expect("constant"),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ChameleonError> {
        let one = BigUint::one();
        if self.p <= BigUint::from(3u32) || self.q < BigUint::from(2u32) {
            return Err(ChameleonError::InvalidParams("modulus or order too small"));
        }
        if !((&self.p - &one) % &self.q).is_zero() {
            return Err(ChameleonError::InvalidParams("q does not divide p - 1"));
        }
        if self.g < BigUint::from(2u32) || self.g >= self.p {
            return Err(ChameleonError::InvalidParams("generator out of range"));
        }
        if self.g.modpow(&self.q, &self.p) != one {
            return Err(ChameleonError::InvalidParams(
                "generator order does not divide q",
            ));
        }
        Ok(())
    }

    /// SHA-256 of the decimal encoding, used to bind a group into signed digests.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in [&self.p, &self.q, &self.g] {
            let s = v.to_str_radix(10);
            h.update((s.len() as u64).to_be_bytes());
            h.update(s.as_bytes());
        }
        h.finalize().into()
    }

    /// `g^e mod p`
    pub fn exp_g(&self, e: &BigUint) -> BigUint {
        self.g.modpow(e, &self.p)
    }

    /// SHA-256 of `message`, read big-endian and reduced mod q.
    pub fn hash_to_scalar(&self, message: &[u8]) -> BigUint {
        BigUint::from_bytes_be(&Sha256::digest(message)) % &self.q
    }

    /// Uniform scalar in `[0, q)`. The 512-bit draw keeps the reduction bias negligible.
    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> BigUint {
        let mut buf = [0u8; 64];
        rng.fill_bytes(&mut buf);
        BigUint::from_bytes_be(&buf) % &self.q
    }

    /// Uniform scalar in `[1, q)`.
    pub fn random_nonzero_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> BigUint {
        let mut buf = [0u8; 64];
        rng.fill_bytes(&mut buf);
        BigUint::from_bytes_be(&buf) % (&self.q - 1u32) + 1u32
    }

    /// Inverse modulo the prime q (Fermat).
    pub fn scalar_inverse(&self, x: &BigUint) -> BigUint {
        x.modpow(&(&self.q - 2u32), &self.q)
    }

    /// Byte width of a scalar in fixed-width encodings.
    pub fn scalar_len(&self) -> usize {
        self.q.bits().div_ceil(8) as usize
    }

    /// Byte width of a group element in fixed-width encodings.
    pub fn element_len(&self) -> usize {
        self.p.bits().div_ceil(8) as usize
    }

    pub fn contains(&self, element: &BigUint) -> bool {
        !element.is_zero() && element < &self.p && element.modpow(&self.q, &self.p).is_one()
    }
}

/// Public hashing key `hk = g^td mod p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingKey(#[serde(with = "hex_biguint")] pub BigUint);

/// Collision trapdoor `td`.
#[derive(Clone, PartialEq, Eq)]
pub struct Trapdoor(BigUint);

impl fmt::Debug for Trapdoor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Trapdoor(..)")
    }
}

impl Trapdoor {
    pub fn from_scalar(params: &GroupParams, td: BigUint) -> Result<Self, ChameleonError> {
        if td.is_zero() || td >= params.q {
            return Err(ChameleonError::MalformedTrapdoor);
        }
        Ok(Self(td))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, ChameleonError> {
        Self::from_scalar(params, BigUint::from_bytes_be(bytes))
    }

    pub fn scalar(&self) -> &BigUint {
        &self.0
    }
}

/// Hash randomness `r < q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Randomness(#[serde(with = "hex_biguint")] pub BigUint);

impl Randomness {
    pub fn new(params: &GroupParams, r: BigUint) -> Result<Self, ChameleonError> {
        if r >= params.q {
            return Err(ChameleonError::InvalidRandomness);
        }
        Ok(Self(r))
    }

    pub fn random<R: RngCore + CryptoRng>(params: &GroupParams, rng: &mut R) -> Self {
        Self(params.random_scalar(rng))
    }
}

/// Chameleon hash output, a group element. Renders as lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChameleonDigest(#[serde(with = "hex_biguint")] pub BigUint);

impl ChameleonDigest {
    pub fn to_hex(&self) -> String {
        self.0.to_str_radix(16)
    }
}

impl fmt::Display for ChameleonDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone)]
pub struct ChameleonKeyPair {
    pub hk: HashingKey,
    td: Option<Trapdoor>,
}

impl ChameleonKeyPair {
    pub fn from_trapdoor(params: &GroupParams, td: Trapdoor) -> Self {
        Self {
            hk: HashingKey(params.exp_g(&td.0)),
            td: Some(td),
        }
    }

    /// A key pair that can hash but never collide.
    pub fn public_only(hk: HashingKey) -> Self {
        Self { hk, td: None }
    }

    pub fn trapdoor(&self) -> Option<&Trapdoor> {
        self.td.as_ref()
    }
}

/// Samples `td` uniformly from `[1, q-1]` and returns `(g^td, td)`.
pub fn gen<R: RngCore + CryptoRng>(
    params: &GroupParams,
    rng: &mut R,
) -> Result<ChameleonKeyPair, ChameleonError> {
    params.validate()?;
    let td = Trapdoor(params.random_nonzero_scalar(rng));
    Ok(ChameleonKeyPair::from_trapdoor(params, td))
}

pub fn hash(
    params: &GroupParams,
    hk: &HashingKey,
    message: &[u8],
    r: &Randomness,
) -> Result<ChameleonDigest, ChameleonError> {
    if r.0 >= params.q {
        return Err(ChameleonError::InvalidRandomness);
    }
    let m = params.hash_to_scalar(message);
    let value = params.exp_g(&m) * hk.0.modpow(&r.0, &params.p) % &params.p;
    Ok(ChameleonDigest(value))
}

/// `r' = (H(m) + td*r - H(m')) * td^-1 mod q`
pub fn find_collision(
    params: &GroupParams,
    kp: &ChameleonKeyPair,
    message: &[u8],
    r: &Randomness,
    new_message: &[u8],
) -> Result<Randomness, ChameleonError> {
    let td = kp.trapdoor().ok_or(ChameleonError::MissingTrapdoor)?;
    if r.0 >= params.q {
        return Err(ChameleonError::InvalidRandomness);
    }
    let q = &params.q;
    let m = params.hash_to_scalar(message);
    let m_new = params.hash_to_scalar(new_message);
    // m_new < q, so adding q keeps the subtraction non-negative
    let numerator = (m + &td.0 * &r.0 + q - m_new) % q;
    Ok(Randomness(numerator * params.scalar_inverse(&td.0) % q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn tiny() -> GroupParams {
        GroupParams::profile(ParamProfile::Test)
    }

    // Oracle: repeated multiplication, no modpow.
    fn pow_by_mult(base: u64, exp: u64, p: u64) -> u64 {
        (0..exp).fold(1, |acc, _| acc * base % p)
    }

    fn sha_mod(message: &[u8], q: u64) -> u64 {
        let d = Sha256::digest(message);
        // Horner over bytes keeps the oracle in u64
        d.iter().fold(0u64, |acc, b| (acc * 256 + *b as u64) % q)
    }

    fn fixed_td(td: u32) -> ChameleonKeyPair {
        let params = tiny();
        ChameleonKeyPair::from_trapdoor(&params, Trapdoor::from_scalar(&params, td.into()).unwrap())
    }

    #[test]
    fn gen_with_forced_trapdoor() {
        assert_eq!(fixed_td(3).hk.0, BigUint::from(18u32));
        assert_eq!(pow_by_mult(4, 3, 23), 18);
        assert_eq!(fixed_td(1).hk.0, BigUint::from(4u32));
    }

    #[test]
    fn gen_lands_in_subgroup() {
        let params = tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..50 {
            let kp = gen(&params, &mut rng).unwrap();
            assert!(params.contains(&kp.hk.0));
            let td = kp.trapdoor().unwrap().scalar();
            assert!(*td >= BigUint::one() && *td < params.q);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = GroupParams::new(23u32.into(), 7u32.into(), 4u32.into());
        assert!(matches!(bad, Err(ChameleonError::InvalidParams(_))));
        // 5 has order 22 in Z_23^*
        let bad = GroupParams::new(23u32.into(), 11u32.into(), 5u32.into());
        assert!(matches!(bad, Err(ChameleonError::InvalidParams(_))));
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let params = GroupParams {
            p: 23u32.into(),
            q: 11u32.into(),
            g: 1u32.into(),
        };
        assert!(gen(&params, &mut rng).is_err());
    }

    #[test]
    fn default_profile_is_a_valid_group() {
        let params = GroupParams::profile(ParamProfile::Default);
        params.validate().unwrap();
        assert_eq!(params.p.bits(), 2048);
        assert_eq!(params.q.bits(), 256);
    }

    #[test]
    fn hash_matches_brute_force_oracle() {
        let params = tiny();
        let hk = HashingKey(18u32.into());
        let expected = pow_by_mult(4, sha_mod(b"s", 11), 23);
        let got = hash(&params, &hk, b"s", &Randomness(BigUint::zero())).unwrap();
        assert_eq!(got.0, BigUint::from(expected));
        for r in 0..11u64 {
            let expected = pow_by_mult(4, sha_mod(b"msg", 11), 23) * pow_by_mult(18, r, 23) % 23;
            let got = hash(&params, &hk, b"msg", &Randomness(r.into())).unwrap();
            assert_eq!(got.0, BigUint::from(expected));
        }
    }

    #[test]
    fn hash_rejects_out_of_range_randomness() {
        let params = tiny();
        let hk = fixed_td(3).hk;
        let r = Randomness(BigUint::from(11u32));
        assert_eq!(
            hash(&params, &hk, b"x", &r),
            Err(ChameleonError::InvalidRandomness)
        );
        assert!(Randomness::new(&params, 11u32.into()).is_err());
    }

    #[test]
    fn collision_over_the_whole_randomness_space() {
        let params = tiny();
        let kp = fixed_td(3);
        let r = Randomness(5u32.into());
        let target = hash(&params, &kp.hk, b"a", &r).unwrap();
        let r_new = find_collision(&params, &kp, b"a", &r, b"b").unwrap();
        // Enumerate every r' and keep those that collide.
        let colliding: Vec<u64> = (0..11u64)
            .filter(|c| hash(&params, &kp.hk, b"b", &Randomness((*c).into())).unwrap() == target)
            .collect();
        assert_eq!(colliding.len(), 1);
        assert_eq!(r_new.0, BigUint::from(colliding[0]));
    }

    #[test]
    fn identity_update_is_a_fixed_point() {
        let params = tiny();
        let kp = fixed_td(7);
        for r in 0..11u32 {
            let r = Randomness(r.into());
            assert_eq!(
                find_collision(&params, &kp, b"same", &r, b"same").unwrap(),
                r
            );
        }
    }

    #[test]
    fn collision_requires_trapdoor() {
        let params = tiny();
        let kp = ChameleonKeyPair::public_only(fixed_td(3).hk);
        let r = Randomness(1u32.into());
        assert_eq!(
            find_collision(&params, &kp, b"a", &r, b"b"),
            Err(ChameleonError::MissingTrapdoor)
        );
        let kp = fixed_td(3);
        let bad = Randomness(12u32.into());
        assert_eq!(
            find_collision(&params, &kp, b"a", &bad, b"b"),
            Err(ChameleonError::InvalidRandomness)
        );
    }

    #[test]
    fn digests_vary_with_randomness() {
        let params = tiny();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let kp = gen(&params, &mut rng).unwrap();
        let distinct: std::collections::HashSet<_> = (0..100)
            .map(|_| {
                hash(
                    &params,
                    &kp.hk,
                    b"fixed",
                    &Randomness::random(&params, &mut rng),
                )
                .unwrap()
            })
            .collect();
        assert!(distinct.len() >= 2);
    }

    #[test]
    fn default_profile_collision() {
        let params = GroupParams::profile(ParamProfile::Default);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let kp = gen(&params, &mut rng).unwrap();
        let r = Randomness::random(&params, &mut rng);
        let d = hash(&params, &kp.hk, b"UNASSIGNED", &r).unwrap();
        let r2 = find_collision(&params, &kp, b"UNASSIGNED", &r, b"did:example").unwrap();
        assert_eq!(hash(&params, &kp.hk, b"did:example", &r2).unwrap(), d);
        assert!(d
            .to_hex()
            .chars()
            .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }
}
