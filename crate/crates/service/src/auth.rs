//! Password hashing and session tokens.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;

pub const PBKDF2_SHA256: &str = "pbkdf2-sha256";
pub const DEFAULT_ITERATIONS: u32 = 100_000;
const SALT_BYTES: usize = 16;
const HASH_BYTES: usize = 32;

/// Salted, iterated hash with its parameters, stored per account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordHash {
    pub algorithm: String,
    pub iterations: u32,
    /// Hex.
    pub salt: String,
    /// Hex.
    pub hash: String,
}

fn derive(password: &str, salt: &[u8], iterations: u32) -> [u8; HASH_BYTES] {
    let mut out = [0u8; HASH_BYTES];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut out);
    out
}

impl PasswordHash {
    pub fn new(password: &str, iterations: u32) -> Self {
        let mut salt = [0u8; SALT_BYTES];
        rand::rng().fill_bytes(&mut salt);
        PasswordHash {
            algorithm: PBKDF2_SHA256.into(),
            iterations,
            salt: hex::encode(salt),
            hash: hex::encode(derive(password, &salt, iterations)),
        }
    }

    pub fn verify(&self, password: &str) -> bool {
        if self.algorithm != PBKDF2_SHA256 || self.iterations == 0 {
            return false;
        }
        let (Ok(salt), Ok(expected)) = (hex::decode(&self.salt), hex::decode(&self.hash)) else {
            return false;
        };
        let got = derive(password, &salt, self.iterations);
        // constant-time comparison
        expected.len() == got.len()
            && expected
                .iter()
                .zip(got)
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

/// A fresh random token, hex encoded.
pub fn random_token(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    rand::rng().fill_bytes(&mut buf);
    hex::encode(buf)
}

#[derive(Debug, Clone)]
struct Session {
    user_id: String,
    expires: Instant,
}

/// In-memory bearer tokens. Sessions do not survive a restart.
#[derive(Debug)]
pub struct Sessions {
    ttl: Duration,
    table: Mutex<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(ttl: Duration) -> Self {
        Sessions {
            ttl,
            table: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn issue(&self, user_id: &str) -> String {
        let token = random_token(32);
        let mut table = self.table.lock().unwrap();
        let now = Instant::now();
        table.retain(|_, s| s.expires > now);
        table.insert(
            token.clone(),
            Session {
                user_id: user_id.to_string(),
                expires: now + self.ttl,
            },
        );
        token
    }

    /// The user behind a live token.
    pub fn resolve(&self, token: &str) -> Option<String> {
        let table = self.table.lock().unwrap();
        let s = table.get(token)?;
        (s.expires > Instant::now()).then(|| s.user_id.clone())
    }

    pub fn revoke_user(&self, user_id: &str) {
        self.table
            .lock()
            .unwrap()
            .retain(|_, s| s.user_id != user_id);
    }
}
