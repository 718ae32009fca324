//! Accounts, password hashing, sessions and the authorization policy.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use argon2::password_hash::rand_core::OsRng;
use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::Argon2;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Manager,
    Admin,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::User, Role::Manager, Role::Admin];
}

/// Stored account. The hash never leaves the service: API responses use
/// [`UserView`] and `Debug` redacts it.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: String,
    pub username: String,
    pub password_hash: String,
    pub role: Role,
    #[serde(default)]
    pub managed_user_ids: BTreeSet<String>,
}

impl fmt::Debug for UserAccount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserAccount")
            .field("user_id", &self.user_id)
            .field("username", &self.username)
            .field("password_hash", &"<redacted>")
            .field("role", &self.role)
            .field("managed_user_ids", &self.managed_user_ids)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserView {
    pub user_id: String,
    pub username: String,
    pub role: Role,
    pub managed_user_ids: BTreeSet<String>,
}

impl From<&UserAccount> for UserView {
    fn from(u: &UserAccount) -> Self {
        UserView {
            user_id: u.user_id.clone(),
            username: u.username.clone(),
            role: u.role,
            managed_user_ids: u.managed_user_ids.clone(),
        }
    }
}

/// Salted Argon2id hash in PHC string form.
pub fn hash_password(password: &str) -> ServiceResult<String> {
    let salt = SaltString::generate(&mut OsRng);
    Argon2::default()
        .hash_password(password.as_bytes(), &salt)
        .map(|h| h.to_string())
        .map_err(|e| ServiceError::Internal(format!("password hashing failed: {e}")))
}

/// Constant-time check of `password` against a PHC hash string.
pub fn verify_password(password: &str, hash: &str) -> bool {
    PasswordHash::new(hash)
        .map(|parsed| Argon2::default().verify_password(password.as_bytes(), &parsed).is_ok())
        .unwrap_or(false)
}

/// Verifies against a throwaway hash so unknown usernames cost the same
/// time as wrong passwords.
pub fn burn_verification(password: &str) {
    static DUMMY: OnceLock<String> = OnceLock::new();
    let hash = DUMMY.get_or_init(|| {
        let mut bytes = [0u8; 16];
        OsRng.fill_bytes(&mut bytes);
        hash_password(&hex::encode(bytes)).expect("hashing a random password")
    });
    let _ = verify_password(password, hash);
}

pub fn random_token(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    rand::rngs::OsRng.fill_bytes(&mut buf);
    hex::encode(buf)
}

#[derive(Debug, Clone)]
struct Session {
    user_id: String,
    expires: Instant,
}

/// Opaque bearer tokens held in memory; they expire after a fixed lifetime
/// and do not survive a restart.
#[derive(Debug)]
pub struct SessionTable {
    ttl: Duration,
    sessions: Mutex<HashMap<String, Session>>,
}

impl SessionTable {
    pub fn new(ttl: Duration) -> SessionTable {
        SessionTable {
            ttl,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    pub fn issue(&self, user_id: &str) -> String {
        let token = random_token(32);
        let now = Instant::now();
        let mut sessions = self.sessions.lock().expect("session lock");
        sessions.retain(|_, s| s.expires > now);
        sessions.insert(
            token.clone(),
            Session {
                user_id: user_id.to_string(),
                expires: now + self.ttl,
            },
        );
        token
    }

    pub fn user_for(&self, token: &str) -> Option<String> {
        let sessions = self.sessions.lock().expect("session lock");
        sessions
            .get(token)
            .filter(|s| s.expires > Instant::now())
            .map(|s| s.user_id.clone())
    }

    pub fn revoke(&self, token: &str) {
        self.sessions.lock().expect("session lock").remove(token);
    }

    pub fn revoke_user(&self, user_id: &str) {
        self.sessions.lock().expect("session lock").retain(|_, s| s.user_id != user_id);
    }
}

/// How the caller relates to the owner of the resource being touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Own,
    Managed,
    Other,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Own, Relation::Managed, Relation::Other];

    pub fn between(caller: &UserAccount, owner_id: &str) -> Relation {
        if caller.user_id == owner_id {
            Relation::Own
        } else if caller.role == Role::Manager && caller.managed_user_ids.contains(owner_id) {
            Relation::Managed
        } else {
            Relation::Other
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    ViewAccount,
    ListPedigrees,
    ReadPedigree,
    CreatePedigree,
    MutatePedigree,
    CopyPedigree,
    DeletePedigree,
    EnqueueRun,
    ReadRun,
    ReadNotifications,
    ManageAccounts,
}

impl Action {
    pub const ALL: [Action; 11] = [
        Action::ViewAccount,
        Action::ListPedigrees,
        Action::ReadPedigree,
        Action::CreatePedigree,
        Action::MutatePedigree,
        Action::CopyPedigree,
        Action::DeletePedigree,
        Action::EnqueueRun,
        Action::ReadRun,
        Action::ReadNotifications,
        Action::ManageAccounts,
    ];

    fn is_read(self) -> bool {
        matches!(
            self,
            Action::ViewAccount | Action::ListPedigrees | Action::ReadPedigree | Action::ReadRun
        )
    }
}

/// The complete authorization policy. Owners may do everything with their
/// own data, managers may only read their managed users' data, admins may
/// do everything, and account management is admin-only.
pub fn allowed(role: Role, action: Action, relation: Relation) -> bool {
    match (role, action, relation) {
        (Role::Admin, _, _) => true,
        (_, Action::ManageAccounts, _) => false,
        (_, _, Relation::Own) => true,
        (Role::Manager, a, Relation::Managed) => a.is_read(),
        _ => false,
    }
}

pub fn authorize(caller: &UserAccount, action: Action, owner_id: &str) -> ServiceResult<()> {
    if allowed(caller.role, action, Relation::between(caller, owner_id)) {
        Ok(())
    } else {
        Err(ServiceError::Forbidden)
    }
}
