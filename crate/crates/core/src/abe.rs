//! Ciphertext-policy attribute-based encryption with conjunctive policies.
//!
//! Each attribute `a` has a master secret `s_a` and public element `P_a = g^s_a`.
//! Encryption encapsulates one ElGamal share `(C_a = g^k_a, K_a = P_a^k_a)` per
//! policy attribute, derives a payload key from all `K_a`, and seals the
//! payload with ChaCha20-Poly1305. Recovering the payload key needs `s_a` for
//! every attribute in the policy.
//!
//! This construction is not collusion resistant: two holders can pool their
//! attribute keys. Onboarding collusion is handled by the vote gate instead.

use std::collections::{BTreeMap, BTreeSet};

use hkdf::Hkdf;
use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::chameleon::GroupParams;
use crate::encoding::{hex_biguint, hex_bytes};
use crate::keys::{aead_decrypt, aead_encrypt};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbeError {
    #[error("attribute universe must not be empty")]
    EmptyUniverse,
    #[error("duplicate attribute `{0}`")]
    DuplicateAttribute(String),
    #[error("attribute names must be non-empty")]
    EmptyAttributeName,
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("access policy must list at least one attribute")]
    EmptyPolicy,
    #[error("key attributes do not satisfy the policy; missing {missing:?}")]
    PolicyNotSatisfied { missing: Vec<String> },
    #[error("ciphertext failed its integrity check")]
    CorruptCiphertext,
}

/// Conjunction of attribute names. Order is kept as written; duplicates are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AccessPolicy(Vec<String>);

impl AccessPolicy {
    pub fn new<I, S>(attributes: I) -> Result<Self, AbeError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let attrs: Vec<String> = attributes.into_iter().map(Into::into).collect();
        if attrs.is_empty() {
            return Err(AbeError::EmptyPolicy);
        }
        let mut seen = BTreeSet::new();
        for a in &attrs {
            if a.is_empty() {
                return Err(AbeError::EmptyAttributeName);
            }
            if !seen.insert(a.as_str()) {
                return Err(AbeError::DuplicateAttribute(a.clone()));
            }
        }
        Ok(Self(attrs))
    }

    pub fn attributes(&self) -> &[String] {
        &self.0
    }

    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.0.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }

    pub fn is_satisfied_by(&self, attributes: &BTreeSet<String>) -> bool {
        self.0.iter().all(|a| attributes.contains(a))
    }
}

impl TryFrom<Vec<String>> for AccessPolicy {
    type Error = AbeError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<AccessPolicy> for Vec<String> {
    fn from(p: AccessPolicy) -> Self {
        p.0
    }
}

/// Public half of the universe: everything an encryptor needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicParams {
    pub group: GroupParams,
    pub public_keys: BTreeMap<String, Element>,
}

impl PublicParams {
    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.public_keys.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element(#[serde(with = "hex_biguint")] pub BigUint);

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scalar(#[serde(with = "hex_biguint")] BigUint);

impl std::fmt::Debug for Scalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Scalar(..)")
    }
}

#[derive(Debug, Clone)]
pub struct AttributeUniverse {
    public: PublicParams,
    master_secrets: BTreeMap<String, Scalar>,
}

impl AttributeUniverse {
    pub fn public(&self) -> &PublicParams {
        &self.public
    }

    pub fn group(&self) -> &GroupParams {
        &self.public.group
    }

    pub fn contains(&self, attribute: &str) -> bool {
        self.master_secrets.contains_key(attribute)
    }

    pub fn len(&self) -> usize {
        self.master_secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.master_secrets.is_empty()
    }
}

/// Attribute keys issued to one holder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSecretKey {
    pub holder_did: String,
    key_material: BTreeMap<String, Scalar>,
}

impl AttributeSecretKey {
    /// A key for no attributes.
    pub fn empty(holder_did: &str) -> Self {
        AttributeSecretKey {
            holder_did: holder_did.to_string(),
            key_material: BTreeMap::new(),
        }
    }

    pub fn attributes(&self) -> BTreeSet<String> {
        self.key_material.keys().cloned().collect()
    }

    /// Pools two keys. Models colluding holders; see the module docs.
    pub fn merged_with(&self, other: &AttributeSecretKey) -> AttributeSecretKey {
        let mut key_material = self.key_material.clone();
        key_material.extend(other.key_material.clone());
        AttributeSecretKey {
            holder_did: self.holder_did.clone(),
            key_material,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encapsulation {
    pub attribute: String,
    pub element: BigUint,
}

/// Serializes as one hex string holding the tagged binary envelope.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HexEnvelope", into = "HexEnvelope")]
pub struct AbeCiphertext {
    pub policy: AccessPolicy,
    pub encapsulations: Vec<Encapsulation>,
    pub nonce: [u8; 12],
    pub payload: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(transparent)]
struct HexEnvelope(#[serde(with = "hex_bytes")] Vec<u8>);

impl TryFrom<HexEnvelope> for AbeCiphertext {
    type Error = AbeError;
    fn try_from(v: HexEnvelope) -> Result<Self, Self::Error> {
        AbeCiphertext::from_bytes(&v.0)
    }
}

impl From<AbeCiphertext> for HexEnvelope {
    fn from(ct: AbeCiphertext) -> Self {
        HexEnvelope(ct.to_bytes())
    }
}

const ENVELOPE_TAG: &[u8] = b"VCTP-ABE1";

fn put(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AbeError> {
        if self.0.len() < n {
            return Err(AbeError::CorruptCiphertext);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32, AbeError> {
        Ok(u32::from_be_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn chunk(&mut self) -> Result<&'a [u8], AbeError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

impl AbeCiphertext {
    /// `tag | n | (name, C_a)* | nonce | payload`, with u32 length prefixes.
    /// Encapsulations are stored in sorted attribute order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = ENVELOPE_TAG.to_vec();
        out.extend_from_slice(&(self.policy.attributes().len() as u32).to_be_bytes());
        for a in self.policy.attributes() {
            put(&mut out, a.as_bytes());
        }
        out.extend_from_slice(&(self.encapsulations.len() as u32).to_be_bytes());
        for e in &self.encapsulations {
            put(&mut out, e.attribute.as_bytes());
            put(&mut out, &e.element.to_bytes_be());
        }
        out.extend_from_slice(&self.nonce);
        put(&mut out, &self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader(bytes);
        if r.take(ENVELOPE_TAG.len())? != ENVELOPE_TAG {
            return Err(AbeError::CorruptCiphertext);
        }
        let utf8 =
            |b: &[u8]| String::from_utf8(b.to_vec()).map_err(|_| AbeError::CorruptCiphertext);
        let n = r.u32()?;
        let mut attrs = Vec::new();
        for _ in 0..n {
            attrs.push(utf8(r.chunk()?)?);
        }
        let policy = AccessPolicy::new(attrs).map_err(|_| AbeError::CorruptCiphertext)?;
        let m = r.u32()?;
        let mut encapsulations = Vec::new();
        for _ in 0..m {
            let attribute = utf8(r.chunk()?)?;
            let element = BigUint::from_bytes_be(r.chunk()?);
            encapsulations.push(Encapsulation { attribute, element });
        }
        let nonce: [u8; 12] = r.take(12)?.try_into().expect("12 bytes");
        let payload = r.chunk()?.to_vec();
        if !r.0.is_empty() {
            return Err(AbeError::CorruptCiphertext);
        }
        Ok(Self {
            policy,
            encapsulations,
            nonce,
            payload,
        })
    }

    fn header_aad(&self) -> Vec<u8> {
        let mut header = self.clone();
        header.payload.clear();
        header.nonce = [0; 12];
        header.to_bytes()
    }
}

/// One master secret and public element per attribute, drawn from `rng`.
pub fn setup<R: RngCore + CryptoRng>(
    group: &GroupParams,
    attribute_names: &[impl AsRef<str>],
    rng: &mut R,
) -> Result<AttributeUniverse, AbeError> {
    if attribute_names.is_empty() {
        return Err(AbeError::EmptyUniverse);
    }
    let mut public_keys = BTreeMap::new();
    let mut master_secrets = BTreeMap::new();
    for name in attribute_names {
        let name = name.as_ref();
        if name.is_empty() {
            return Err(AbeError::EmptyAttributeName);
        }
        if master_secrets.contains_key(name) {
            return Err(AbeError::DuplicateAttribute(name.to_string()));
        }
        let s = group.random_nonzero_scalar(rng);
        public_keys.insert(name.to_string(), Element(group.exp_g(&s)));
        master_secrets.insert(name.to_string(), Scalar(s));
    }
    Ok(AttributeUniverse {
        public: PublicParams {
            group: group.clone(),
            public_keys,
        },
        master_secrets,
    })
}

pub fn keygen<S: AsRef<str>>(
    universe: &AttributeUniverse,
    holder_did: &str,
    attributes: impl IntoIterator<Item = S>,
) -> Result<AttributeSecretKey, AbeError> {
    let mut key_material = BTreeMap::new();
    for a in attributes {
        let a = a.as_ref();
        let secret = universe
            .master_secrets
            .get(a)
            .ok_or_else(|| AbeError::UnknownAttribute(a.to_string()))?;
        key_material.insert(a.to_string(), secret.clone());
    }
    Ok(AttributeSecretKey {
        holder_did: holder_did.to_string(),
        key_material,
    })
}

fn payload_key(group: &GroupParams, shares: &[(&str, BigUint)], aad: &[u8]) -> [u8; 32] {
    let width = group.element_len();
    let mut ikm = Vec::with_capacity(shares.len() * (width + 16));
    for (name, k) in shares {
        put(&mut ikm, name.as_bytes());
        let bytes = k.to_bytes_be();
        ikm.extend(std::iter::repeat_n(0u8, width.saturating_sub(bytes.len())));
        ikm.extend_from_slice(&bytes);
    }
    let hk = Hkdf::<Sha256>::new(Some(aad), &ikm);
    let mut okm = [0u8; 32];
    hk.expand(b"vctp abe payload key", &mut okm)
        .expect("valid length");
    okm
}

pub fn encrypt<R: RngCore + CryptoRng>(
    public: &PublicParams,
    policy: &AccessPolicy,
    plaintext: &[u8],
    rng: &mut R,
) -> Result<AbeCiphertext, AbeError> {
    let group = &public.group;
    let mut encapsulations = Vec::new();
    let mut shares = Vec::new();
    for name in policy.sorted() {
        let pk = public
            .public_keys
            .get(name)
            .ok_or_else(|| AbeError::UnknownAttribute(name.to_string()))?;
        let k = group.random_nonzero_scalar(rng);
        encapsulations.push(Encapsulation {
            attribute: name.to_string(),
            element: group.exp_g(&k),
        });
        shares.push((name, pk.0.modpow(&k, &group.p)));
    }
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let mut ct = AbeCiphertext {
        policy: policy.clone(),
        encapsulations,
        nonce,
        payload: Vec::new(),
    };
    let aad = ct.header_aad();
    let key = payload_key(group, &shares, &aad);
    ct.payload = aead_encrypt(&key, &nonce, &aad, plaintext);
    Ok(ct)
}

pub fn decrypt(
    group: &GroupParams,
    key: &AttributeSecretKey,
    ct: &AbeCiphertext,
) -> Result<Vec<u8>, AbeError> {
    let missing: Vec<String> = ct
        .policy
        .attributes()
        .iter()
        .filter(|a| !key.key_material.contains_key(*a))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(AbeError::PolicyNotSatisfied { missing });
    }
    let sorted = ct.policy.sorted();
    if sorted.len() != ct.encapsulations.len() {
        return Err(AbeError::CorruptCiphertext);
    }
    let mut shares = Vec::with_capacity(sorted.len());
    for (name, enc) in sorted.iter().zip(&ct.encapsulations) {
        if *name != enc.attribute || !group.contains(&enc.element) {
            return Err(AbeError::CorruptCiphertext);
        }
        let secret = &key.key_material[*name];
        shares.push((*name, enc.element.modpow(&secret.0, &group.p)));
    }
    let aad = ct.header_aad();
    let k = payload_key(group, &shares, &aad);
    aead_decrypt(&k, &ct.nonce, &aad, &ct.payload).map_err(|_| AbeError::CorruptCiphertext)
}
