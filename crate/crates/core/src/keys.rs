//! Signing keys, and hybrid public-key encryption (X25519 + HKDF + ChaCha20-Poly1305).
//!
//! Every actor owns one Ed25519 key for signatures and one X25519 key for
//! receiving sealed messages. Both public halves are published in the DID
//! document.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signature, Signer, Verifier};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;
use x25519_dalek::{PublicKey as BoxPublicKey, StaticSecret};

pub use ed25519_dalek::{SigningKey, VerifyingKey};

use crate::encoding::b64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SealError {
    #[error("decryption failed")]
    DecryptionFailed,
}

/// Ed25519 signature bytes.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureBytes(#[serde(with = "b64")] pub Vec<u8>);

impl std::fmt::Debug for SignatureBytes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SignatureBytes({})", hex::encode(&self.0))
    }
}

pub fn sign(key: &SigningKey, message: &[u8]) -> SignatureBytes {
    SignatureBytes(key.sign(message).to_bytes().to_vec())
}

pub fn verify(key: &VerifyingKey, message: &[u8], sig: &SignatureBytes) -> bool {
    let Ok(sig) = Signature::from_slice(&sig.0) else {
        return false;
    };
    key.verify(message, &sig).is_ok()
}

pub fn verifying_key_from_bytes(bytes: &[u8]) -> Option<VerifyingKey> {
    let arr: [u8; 32] = bytes.try_into().ok()?;
    VerifyingKey::from_bytes(&arr).ok()
}

/// The private half of an actor's keys.
#[derive(Clone)]
pub struct KeyBundle {
    pub signing: SigningKey,
    pub encryption: StaticSecret,
}

impl std::fmt::Debug for KeyBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyBundle")
            .field(
                "verifying",
                &hex::encode(self.signing.verifying_key().as_bytes()),
            )
            .finish_non_exhaustive()
    }
}

impl KeyBundle {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let signing = SigningKey::generate(rng);
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self {
            signing,
            encryption: StaticSecret::from(seed),
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn box_public(&self) -> BoxPublicKey {
        BoxPublicKey::from(&self.encryption)
    }
}

/// Ciphertext from [`seal`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SealedBox {
    #[serde(with = "b64")]
    pub ephemeral: [u8; 32],
    #[serde(with = "b64")]
    pub nonce: [u8; 12],
    #[serde(with = "b64")]
    pub ciphertext: Vec<u8>,
}

fn box_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> Key {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 32];
    hk.expand(b"vctp sealed box v1", &mut okm)
        .expect("32 bytes is a valid length");
    Key::from(okm)
}

/// Encrypts `plaintext` so that only the holder of `recipient`'s secret can read it.
pub fn seal<R: RngCore + CryptoRng>(
    recipient: &BoxPublicKey,
    aad: &[u8],
    plaintext: &[u8],
    rng: &mut R,
) -> SealedBox {
    let mut eph_seed = [0u8; 32];
    rng.fill_bytes(&mut eph_seed);
    let eph = StaticSecret::from(eph_seed);
    let eph_pub = BoxPublicKey::from(&eph);
    let shared = eph.diffie_hellman(recipient);
    let key = box_key(shared.as_bytes(), eph_pub.as_bytes(), recipient.as_bytes());
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let ciphertext = ChaCha20Poly1305::new(&key)
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad,
            },
        )
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    SealedBox {
        ephemeral: *eph_pub.as_bytes(),
        nonce,
        ciphertext,
    }
}

pub fn open(secret: &StaticSecret, aad: &[u8], sealed: &SealedBox) -> Result<Vec<u8>, SealError> {
    let eph_pub = BoxPublicKey::from(sealed.ephemeral);
    let own_pub = BoxPublicKey::from(secret);
    let shared = secret.diffie_hellman(&eph_pub);
    let key = box_key(shared.as_bytes(), &sealed.ephemeral, own_pub.as_bytes());
    ChaCha20Poly1305::new(&key)
        .decrypt(
            Nonce::from_slice(&sealed.nonce),
            Payload {
                msg: &sealed.ciphertext,
                aad,
            },
        )
        .map_err(|_| SealError::DecryptionFailed)
}

/// Symmetric AEAD under a caller-derived 32-byte key.
pub(crate) fn aead_encrypt(
    key: &[u8; 32],
    nonce: &[u8; 12],
    aad: &[u8],
    plaintext: &[u8],
) -> Vec<u8> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .encrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: plaintext,
                aad,
            },
        )
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers")
}

pub(crate) fn aead_decrypt(
    key: &[u8; 32],
    nonce: &[u8; 12],
    aad: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, SealError> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: ciphertext,
                aad,
            },
        )
        .map_err(|_| SealError::DecryptionFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn seal_round_trip_and_wrong_recipient() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let alice = KeyBundle::generate(&mut rng);
        let eve = KeyBundle::generate(&mut rng);
        let sealed = seal(&alice.box_public(), b"ctx", b"kit", &mut rng);
        assert_eq!(open(&alice.encryption, b"ctx", &sealed).unwrap(), b"kit");
        assert_eq!(
            open(&eve.encryption, b"ctx", &sealed),
            Err(SealError::DecryptionFailed)
        );
        assert_eq!(
            open(&alice.encryption, b"other", &sealed),
            Err(SealError::DecryptionFailed)
        );
    }

    #[test]
    fn signatures_verify_only_for_the_signed_bytes() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let k = KeyBundle::generate(&mut rng);
        let sig = sign(&k.signing, b"hello");
        assert!(verify(&k.verifying_key(), b"hello", &sig));
        assert!(!verify(&k.verifying_key(), b"hellp", &sig));
        assert!(!verify(
            &k.verifying_key(),
            b"hello",
            &SignatureBytes(vec![0; 3])
        ));
    }
}
