//! Authority key files: lowercase hex of the secret scalar at `path`, and of
//! the public key at `path.pub`.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use ctrace::crypto::{KeyPair, Scalar};
use rand_core::CryptoRngCore;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("{}: already exists (pass --force to overwrite)", .0.display())]
    Exists(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {reason}", path.display())]
    Invalid { path: PathBuf, reason: String },
}

pub fn public_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".pub");
    PathBuf::from(p)
}

fn write_one(path: &Path, contents: &str, force: bool, private: bool) -> Result<(), KeyFileError> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    #[cfg(unix)]
    if private {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    #[cfg(not(unix))]
    let _ = private;
    let mut f = opts.open(path).map_err(|e| match e.kind() {
        io::ErrorKind::AlreadyExists => KeyFileError::Exists(path.to_path_buf()),
        _ => KeyFileError::Io { path: path.to_path_buf(), source: e },
    })?;
    writeln!(f, "{contents}").map_err(|e| KeyFileError::Io { path: path.to_path_buf(), source: e })
}

/// Generates a key pair and writes both files. Refuses to touch existing
/// files unless `force` is set.
pub fn generate<R: CryptoRngCore + ?Sized>(path: &Path, force: bool, rng: &mut R) -> Result<KeyPair, KeyFileError> {
    let pub_path = public_path(path);
    if !force {
        for p in [path, pub_path.as_path()] {
            if p.exists() {
                return Err(KeyFileError::Exists(p.to_path_buf()));
            }
        }
    }
    let keys = KeyPair::generate(rng);
    write_one(path, &hex::encode(keys.sk.to_bytes()), force, true)?;
    write_one(&pub_path, &keys.pk.to_hex(), force, false)?;
    Ok(keys)
}

/// Loads the secret key. If `path.pub` exists it must match.
pub fn load(path: &Path) -> Result<KeyPair, KeyFileError> {
    let invalid = |p: &Path, reason: String| KeyFileError::Invalid { path: p.to_path_buf(), reason };
    let text = fs::read_to_string(path).map_err(|e| KeyFileError::Io { path: path.to_path_buf(), source: e })?;
    let bytes = hex::decode(text.trim()).map_err(|e| invalid(path, format!("not hex: {e}")))?;
    let sk = Scalar::from_bytes(&bytes).map_err(|e| invalid(path, e.to_string()))?;
    let keys = KeyPair::from_secret(sk);

    let pub_path = public_path(path);
    if let Ok(pub_text) = fs::read_to_string(&pub_path) {
        if pub_text.trim() != keys.pk.to_hex() {
            return Err(invalid(&pub_path, "does not match the secret key".into()));
        }
    }
    Ok(keys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn generate_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("authority.key");
        let keys = generate(&path, false, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.pk, keys.pk);
        let pub_text = fs::read_to_string(public_path(&path)).unwrap();
        assert_eq!(pub_text.trim(), keys.pk.to_hex());
        assert!(pub_text.trim().chars().all(|c| c.is_ascii_digit() || ('a'..='f').contains(&c)));
    }

    #[test]
    fn existing_file_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k");
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let first = generate(&path, false, &mut rng).unwrap();
        assert!(matches!(generate(&path, false, &mut rng), Err(KeyFileError::Exists(_))));
        assert_eq!(load(&path).unwrap().pk, first.pk);
        let second = generate(&path, true, &mut rng).unwrap();
        assert_ne!(second.pk, first.pk);
        assert_eq!(load(&path).unwrap().pk, second.pk);
    }

    #[test]
    fn corrupted_file_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.key");
        fs::write(&path, "zz-not-hex\n").unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("broken.key"), "{err}");

        fs::write(&path, "ff".repeat(32)).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("broken.key"), "{err}");
    }

    #[test]
    fn mismatched_public_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k");
        generate(&path, false, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        fs::write(public_path(&path), "00".repeat(32)).unwrap();
        let err = load(&path).unwrap_err().to_string();
        assert!(err.contains("k.pub"), "{err}");
    }
}
