//! Trust propagation templates.
//!
//! A template file is a JSON array of three objects: the update policy, the
//! trust-proxy block, and the credential block. The update policy is fixed;
//! the other two are updatable and gated by `proxyAttribute` and
//! `nextLevelIssuerAttrs` respectively.
//!
//! Each section's bytes are the canonical JSON of its object (sorted keys, no
//! insignificant whitespace). Those bytes are what gets hashed.

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::abe::AccessPolicy;
use crate::encoding::canonical_json;

pub const UPDATE_POLICY: &str = "update_policy";
pub const TRUST_PROXY: &str = "trust_proxy";
pub const CREDENTIAL: &str = "credential";

/// DID fields of a section that has not been filled in yet.
pub const UNASSIGNED: &str = "UNASSIGNED";

const VERSION_KEY: &str = "templateVersion";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("malformed document at {location}: {detail}")]
    MalformedDocument { location: String, detail: String },
    #[error("`type` must contain \"VerifiableCredential\" and \"TrustPropagation\"")]
    MissingTypeTag,
    #[error("unknown section `{0}`")]
    UnknownSection(String),
    #[error("section `{0}` is not updatable")]
    SectionNotUpdatable(String),
}

fn malformed(location: impl Into<String>, detail: impl ToString) -> TemplateError {
    TemplateError::MalformedDocument {
        location: location.into(),
        detail: detail.to_string(),
    }
}

/// `did:<method>:<id>` with non-empty method and id.
pub fn is_did(s: &str) -> bool {
    let mut parts = s.splitn(3, ':');
    matches!(
        (parts.next(), parts.next(), parts.next()),
        (Some("did"), Some(m), Some(id)) if !m.is_empty() && !id.is_empty()
            && m.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    )
}

mod zulu {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_rfc3339_opts(SecondsFormat::AutoSi, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(s.trim())
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| D::Error::custom(format!("invalid RFC 3339 timestamp `{s}`: {e}")))
    }
}

mod loose_date {
    use chrono::NaiveDate;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.format("%Y-%m-%d").to_string())
    }

    /// Accepts ISO dates and the `M/D/YYYY` form.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let s = String::deserialize(d)?;
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
            .or_else(|_| NaiveDate::parse_from_str(s.trim(), "%m/%d/%Y"))
            .map_err(|_| D::Error::custom(format!("invalid date `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRules {
    #[serde(rename = "proxyAttribute")]
    pub proxy_attributes: AccessPolicy,
    pub permissions: Vec<String>,
    #[serde(rename = "nextLevelIssuerAttrs")]
    pub next_level_issuer_attrs: AccessPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct UpdatePolicySection {
    #[serde(rename = "@context")]
    pub context: String,
    pub id: String,
    pub jurisdiction: String,
    #[serde(rename = "type")]
    pub types: Vec<String>,
    pub official_issuer: String,
    #[serde(with = "zulu")]
    pub issuance_date: DateTime<Utc>,
    #[serde(with = "zulu")]
    pub expiration_date: DateTime<Utc>,
    pub scenario: String,
    pub approval_policy: Vec<String>,
    pub num_votes_required: u32,
    pub policy: PolicyRules,
}

impl UpdatePolicySection {
    fn validate(&self) -> Result<(), TemplateError> {
        let has = |t: &str| self.types.iter().any(|x| x == t);
        if !has("VerifiableCredential") || !has("TrustPropagation") {
            return Err(TemplateError::MissingTypeTag);
        }
        if self.expiration_date <= self.issuance_date {
            return Err(malformed(
                "update_policy.expirationDate",
                "must be later than issuanceDate",
            ));
        }
        if !is_did(&self.official_issuer) {
            return Err(malformed("update_policy.officialIssuer", "not a DID"));
        }
        Ok(())
    }

    pub fn is_valid_at(&self, now: DateTime<Utc>) -> bool {
        self.issuance_date <= now && now <= self.expiration_date
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grant {
    pub id: String,
    pub permissions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustProxySection {
    #[serde(rename = "TrustProxy")]
    pub trust_proxy: String,
    #[serde(rename = "nextLevelIssuerDetails")]
    pub next_level_issuer: Grant,
}

impl TrustProxySection {
    pub fn unassigned() -> Self {
        Self {
            trust_proxy: UNASSIGNED.into(),
            next_level_issuer: Grant {
                id: UNASSIGNED.into(),
                permissions: Vec::new(),
            },
        }
    }

    pub fn is_instantiated(&self) -> bool {
        is_did(&self.trust_proxy) && is_did(&self.next_level_issuer.id)
    }

    fn validate(&self) -> Result<(), TemplateError> {
        for (loc, v) in [
            ("trust_proxy.TrustProxy", &self.trust_proxy),
            (
                "trust_proxy.nextLevelIssuerDetails.id",
                &self.next_level_issuer.id,
            ),
        ] {
            if v != UNASSIGNED && !is_did(v) {
                return Err(malformed(
                    loc,
                    format!("`{v}` is neither a DID nor {UNASSIGNED}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredentialSection {
    #[serde(rename = "Title")]
    pub title: String,
    #[serde(rename = "IssueDate", with = "loose_date")]
    pub issue_date: NaiveDate,
    #[serde(rename = "Text")]
    pub text: String,
    #[serde(rename = "signedBy")]
    pub signed_by: String,
    #[serde(rename = "credentialSubject")]
    pub credential_subject: Grant,
}

impl CredentialSection {
    pub fn is_issued(&self) -> bool {
        is_did(&self.signed_by) && is_did(&self.credential_subject.id)
    }

    fn validate(&self) -> Result<(), TemplateError> {
        for (loc, v) in [
            ("credential.signedBy", &self.signed_by),
            (
                "credential.credentialSubject.id",
                &self.credential_subject.id,
            ),
        ] {
            if v != UNASSIGNED && !is_did(v) {
                return Err(malformed(
                    loc,
                    format!("`{v}` is neither a DID nor {UNASSIGNED}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub section_id: String,
    pub content: Vec<u8>,
    pub updatable: bool,
    pub update_policy_attrs: Option<AccessPolicy>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustPropagationTemplate {
    update_policy: UpdatePolicySection,
    pub(crate) sections: Vec<Section>,
    version: u64,
}

/// Decodes section bytes of a known section type and returns its canonical form.
fn normalize(section_id: &str, content: &[u8]) -> Result<Vec<u8>, TemplateError> {
    fn decode<T: for<'de> Deserialize<'de> + Serialize>(
        id: &str,
        content: &[u8],
    ) -> Result<(T, Vec<u8>), TemplateError> {
        let v: T = serde_json::from_slice(content).map_err(|e| malformed(id, e))?;
        let bytes = canonical_json(&v);
        Ok((v, bytes))
    }
    match section_id {
        UPDATE_POLICY => {
            let (v, bytes) = decode::<UpdatePolicySection>(section_id, content)?;
            v.validate()?;
            Ok(bytes)
        }
        TRUST_PROXY => {
            let (v, bytes) = decode::<TrustProxySection>(section_id, content)?;
            v.validate()?;
            Ok(bytes)
        }
        CREDENTIAL => {
            let (v, bytes) = decode::<CredentialSection>(section_id, content)?;
            v.validate()?;
            Ok(bytes)
        }
        _ => Ok(decode::<Value>(section_id, content)?.1),
    }
}

impl TrustPropagationTemplate {
    /// The standard three-section layout.
    pub fn new(
        update_policy: UpdatePolicySection,
        trust_proxy: &TrustProxySection,
        credential: &CredentialSection,
    ) -> Result<Self, TemplateError> {
        update_policy.validate()?;
        trust_proxy.validate()?;
        credential.validate()?;
        let sections = vec![
            Section {
                section_id: UPDATE_POLICY.into(),
                content: canonical_json(&update_policy),
                updatable: false,
                update_policy_attrs: None,
            },
            Section {
                section_id: TRUST_PROXY.into(),
                content: canonical_json(trust_proxy),
                updatable: true,
                update_policy_attrs: Some(update_policy.policy.proxy_attributes.clone()),
            },
            Section {
                section_id: CREDENTIAL.into(),
                content: canonical_json(credential),
                updatable: true,
                update_policy_attrs: Some(update_policy.policy.next_level_issuer_attrs.clone()),
            },
        ];
        Ok(Self {
            update_policy,
            sections,
            version: 0,
        })
    }

    /// Arbitrary section layout. The first section must be the fixed update
    /// policy. Only the three-section layout has a file form that [`parse`] reads.
    pub fn from_sections(
        update_policy: UpdatePolicySection,
        extra: Vec<Section>,
    ) -> Result<Self, TemplateError> {
        update_policy.validate()?;
        let mut sections = vec![Section {
            section_id: UPDATE_POLICY.into(),
            content: canonical_json(&update_policy),
            updatable: false,
            update_policy_attrs: None,
        }];
        for mut s in extra {
            if s.section_id == UPDATE_POLICY
                || sections.iter().any(|x| x.section_id == s.section_id)
            {
                return Err(malformed(&s.section_id, "duplicate section id"));
            }
            if s.updatable != s.update_policy_attrs.is_some() {
                return Err(malformed(
                    &s.section_id,
                    "exactly the updatable sections carry an access policy",
                ));
            }
            s.content = normalize(&s.section_id, &s.content)?;
            sections.push(s);
        }
        Ok(Self {
            update_policy,
            sections,
            version: 0,
        })
    }

    pub fn update_policy(&self) -> &UpdatePolicySection {
        &self.update_policy
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn section(&self, section_id: &str) -> Result<&Section, TemplateError> {
        self.sections
            .iter()
            .find(|s| s.section_id == section_id)
            .ok_or_else(|| TemplateError::UnknownSection(section_id.to_string()))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn id(&self) -> &str {
        &self.update_policy.id
    }

    pub fn updatable_sections(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(|s| s.updatable)
    }

    pub fn trust_proxy(&self) -> Result<TrustProxySection, TemplateError> {
        let s = self.section(TRUST_PROXY)?;
        serde_json::from_slice(&s.content).map_err(|e| malformed(TRUST_PROXY, e))
    }

    pub fn credential(&self) -> Result<CredentialSection, TemplateError> {
        let s = self.section(CREDENTIAL)?;
        serde_json::from_slice(&s.content).map_err(|e| malformed(CREDENTIAL, e))
    }

    /// Canonical bytes of one section's content.
    pub fn section_bytes(&self, section_id: &str) -> Result<&[u8], TemplateError> {
        Ok(&self.section(section_id)?.content)
    }

    /// Replaces one updatable section. `new_content` is re-encoded canonically.
    pub fn apply_update(
        &self,
        section_id: &str,
        new_content: &[u8],
    ) -> Result<Self, TemplateError> {
        let idx = self
            .sections
            .iter()
            .position(|s| s.section_id == section_id)
            .ok_or_else(|| TemplateError::UnknownSection(section_id.to_string()))?;
        if !self.sections[idx].updatable {
            return Err(TemplateError::SectionNotUpdatable(section_id.to_string()));
        }
        let content = normalize(section_id, new_content)?;
        let mut next = self.clone();
        next.sections[idx].content = content;
        next.version += 1;
        Ok(next)
    }

    /// Sorted-key minified JSON array, one object per section. The version
    /// counter rides along in the first object as `templateVersion`.
    pub fn serialize_canonical(&self) -> Vec<u8> {
        let mut items = Vec::with_capacity(self.sections.len());
        for s in &self.sections {
            let mut v: Value = serde_json::from_slice(&s.content).expect("section bytes are json");
            if s.section_id == UPDATE_POLICY {
                v.as_object_mut()
                    .expect("update policy is an object")
                    .insert(VERSION_KEY.into(), Value::from(self.version));
            }
            items.push(v);
        }
        canonical_json(&Value::Array(items))
    }

    pub fn to_pretty_json(&self) -> String {
        let v: Value = serde_json::from_slice(&self.serialize_canonical()).expect("canonical json");
        serde_json::to_string_pretty(&v).expect("json value serializes")
    }

    pub fn parse(document: &[u8]) -> Result<Self, TemplateError> {
        if document.iter().all(u8::is_ascii_whitespace) {
            return Err(malformed("document", "empty document"));
        }
        let root: Value = serde_json::from_slice(document).map_err(|e| malformed("document", e))?;
        let Value::Array(items) = root else {
            return Err(malformed(
                "document",
                "expected an array of section objects",
            ));
        };
        if items.len() != 3 {
            return Err(malformed(
                "document",
                format!(
                    "expected 3 sections (update policy, trust proxy, credential), found {}",
                    items.len()
                ),
            ));
        }
        let mut items = items.into_iter();
        let mut policy = items.next().expect("len checked");
        let version = match policy.as_object_mut().and_then(|o| o.remove(VERSION_KEY)) {
            None => 0,
            Some(v) => v.as_u64().ok_or_else(|| {
                malformed(
                    "update_policy.templateVersion",
                    "expected an unsigned integer",
                )
            })?,
        };
        let update_policy: UpdatePolicySection =
            serde_json::from_value(policy).map_err(|e| malformed(UPDATE_POLICY, e))?;
        let trust_proxy: TrustProxySection =
            serde_json::from_value(items.next().expect("len checked"))
                .map_err(|e| malformed(TRUST_PROXY, e))?;
        let credential: CredentialSection =
            serde_json::from_value(items.next().expect("len checked"))
                .map_err(|e| malformed(CREDENTIAL, e))?;
        let mut t = Self::new(update_policy, &trust_proxy, &credential)?;
        t.version = version;
        Ok(t)
    }
}

/// The hospital "letter of authority" template as published by the L1 issuer,
/// with both updatable sections still unassigned.
pub const HOSPITAL_TEMPLATE: &str = include_str!("../data/letter_of_authority.json");

/// The same template after the doctor and the patient filled it in.
pub const LISTING_TEMPLATE: &str = include_str!("../data/letter_of_authority_issued.json");

#[cfg(test)]
mod tests {
    use super::*;

    fn listing() -> TrustPropagationTemplate {
        TrustPropagationTemplate::parse(LISTING_TEMPLATE.as_bytes()).unwrap()
    }

    #[test]
    fn parses_listing_layout() {
        let t = listing();
        assert_eq!(t.sections().len(), 3);
        assert_eq!(t.updatable_sections().count(), 2);
        assert!(!t.section(UPDATE_POLICY).unwrap().updatable);
        let p = t.update_policy();
        assert_eq!(p.num_votes_required, 5);
        assert_eq!(p.approval_policy, vec!["doctor", "nurse"]);
        assert_eq!(
            p.policy.proxy_attributes.attributes(),
            ["doctor", "HospitalA"]
        );
        assert_eq!(
            p.policy.next_level_issuer_attrs.attributes(),
            ["patient", "HospitalA"]
        );
        assert_eq!(
            t.section(TRUST_PROXY)
                .unwrap()
                .update_policy_attrs
                .as_ref()
                .unwrap(),
            &p.policy.proxy_attributes
        );
        let tp = t.trust_proxy().unwrap();
        assert_eq!(tp.trust_proxy, "did:example_doctor:fcgfc2g823fcdd387");
        assert!(tp.is_instantiated());
        let c = t.credential().unwrap();
        assert_eq!(c.issue_date, NaiveDate::from_ymd_opt(2022, 2, 2).unwrap());
        assert_eq!(
            c.credential_subject.permissions,
            vec!["routine-medical-care"]
        );
    }

    #[test]
    fn unassigned_template_parses() {
        let t = TrustPropagationTemplate::parse(HOSPITAL_TEMPLATE.as_bytes()).unwrap();
        assert!(!t.trust_proxy().unwrap().is_instantiated());
        assert!(!t.credential().unwrap().is_issued());
    }

    #[test]
    fn rejects_empty_and_untagged_documents() {
        assert!(matches!(
            TrustPropagationTemplate::parse(b""),
            Err(TemplateError::MalformedDocument { .. })
        ));
        let doc = LISTING_TEMPLATE.replace(
            r#""VerifiableCredential", "TrustPropagation""#,
            r#""VerifiableCredential""#,
        );
        assert_ne!(doc, LISTING_TEMPLATE);
        assert_eq!(
            TrustPropagationTemplate::parse(doc.as_bytes()).unwrap_err(),
            TemplateError::MissingTypeTag
        );
    }

    #[test]
    fn diagnostics_name_the_section() {
        let doc = LISTING_TEMPLATE.replace("\"numVotesRequired\"", "\"numVotes\"");
        match TrustPropagationTemplate::parse(doc.as_bytes()).unwrap_err() {
            TemplateError::MalformedDocument { location, detail } => {
                assert_eq!(location, UPDATE_POLICY);
                assert!(detail.contains("numVotes"), "{detail}");
            }
            e => panic!("unexpected {e:?}"),
        }
        let doc = LISTING_TEMPLATE.replace("2021-07-17T04:20:00Z", "2021-07-01T04:20:00Z");
        assert!(matches!(
            TrustPropagationTemplate::parse(doc.as_bytes()),
            Err(TemplateError::MalformedDocument { .. })
        ));
    }

    #[test]
    fn canonical_form_is_a_fixpoint() {
        let t = listing();
        let bytes = t.serialize_canonical();
        let again = TrustPropagationTemplate::parse(&bytes).unwrap();
        assert_eq!(again, t);
        assert_eq!(again.serialize_canonical(), bytes);
        let s = String::from_utf8(bytes).unwrap();
        assert!(s.contains(r#""issuanceDate":"2021-07-10T04:20:00Z""#));
        assert!(!s.contains(": "));
    }

    #[test]
    fn key_order_does_not_matter() {
        let reordered = r#"[
          {"numVotesRequired": 5, "approvalPolicy": ["doctor","nurse"], "scenario": "OutPatient",
           "expirationDate": "2021-07-17T04:20:00Z", "issuanceDate": "2021-07-10T04:20:00+00:00",
           "officialIssuer": "did:example_hos:fcgfc2g823fcdd387",
           "type": ["VerifiableCredential","TrustPropagation"], "jurisdiction": "HospitalA",
           "id": "http://example.edu/credentials/1872", "@context": "https://www.w3.org/2018/credentials/v1",
           "policy": {"nextLevelIssuerAttrs": ["patient","HospitalA"], "permissions": ["propagate-trust"],
                      "proxyAttribute": ["doctor","HospitalA"]}},
          {"nextLevelIssuerDetails": {"permissions": ["delegate-medical-decision"], "id": "did:example_patient:fcgfc2g823fcdd387"},
           "TrustProxy": "did:example_doctor:fcgfc2g823fcdd387"},
          {"credentialSubject": {"permissions": ["routine-medical-care"], "id": "did:example_holder:fcgfc2g823fcdd387"},
           "signedBy": "did:example_patient:fcgfc2g823fcdd387",
           "Text": "this letter is to authorise the person named in the document to act on my behalf in matters related to the subject mentioned in the document.",
           "IssueDate": "2022-02-02", "Title": "Letter of Authority"}
        ]"#;
        let t = TrustPropagationTemplate::parse(reordered.as_bytes()).unwrap();
        assert_eq!(t.serialize_canonical(), listing().serialize_canonical());
    }

    #[test]
    fn section_bytes_are_the_section_object() {
        let t = listing();
        let b = t.section_bytes(TRUST_PROXY).unwrap();
        let v: TrustProxySection = serde_json::from_slice(b).unwrap();
        assert_eq!(v, t.trust_proxy().unwrap());
        assert_eq!(t.section_bytes(TRUST_PROXY).unwrap(), b);
        assert_eq!(
            t.section_bytes("holder").unwrap_err(),
            TemplateError::UnknownSection("holder".into())
        );
    }

    #[test]
    fn updates_touch_one_section() {
        let t = TrustPropagationTemplate::parse(HOSPITAL_TEMPLATE.as_bytes()).unwrap();
        let filled = TrustProxySection {
            trust_proxy: "did:example_doctor:fcgfc2g823fcdd387".into(),
            next_level_issuer: Grant {
                id: "did:example_patient:fcgfc2g823fcdd387".into(),
                permissions: vec!["delegate-medical-decision".into()],
            },
        };
        let u = t
            .apply_update(TRUST_PROXY, &canonical_json(&filled))
            .unwrap();
        assert_eq!(u.version(), 1);
        assert_eq!(u.trust_proxy().unwrap(), filled);
        assert_eq!(
            u.section_bytes(UPDATE_POLICY).unwrap(),
            t.section_bytes(UPDATE_POLICY).unwrap()
        );
        assert_eq!(
            u.section_bytes(CREDENTIAL).unwrap(),
            t.section_bytes(CREDENTIAL).unwrap()
        );

        assert_eq!(
            t.apply_update(UPDATE_POLICY, t.section_bytes(UPDATE_POLICY).unwrap())
                .unwrap_err(),
            TemplateError::SectionNotUpdatable(UPDATE_POLICY.into())
        );
        let same = t
            .apply_update(CREDENTIAL, t.section_bytes(CREDENTIAL).unwrap())
            .unwrap();
        assert_eq!(same.version(), 1);
        assert_eq!(
            same.section_bytes(CREDENTIAL).unwrap(),
            t.section_bytes(CREDENTIAL).unwrap()
        );

        assert!(matches!(
            t.apply_update(TRUST_PROXY, br#"{"TrustProxy":"bob"}"#),
            Err(TemplateError::MalformedDocument { .. })
        ));
    }

    #[test]
    fn did_syntax() {
        assert!(is_did("did:example_doctor:fcgfc2g823fcdd387"));
        assert!(is_did("did:nurse1:x"));
        assert!(!is_did("did:nurse1"));
        assert!(!is_did("UNASSIGNED"));
        assert!(!is_did("did::x"));
    }
}
