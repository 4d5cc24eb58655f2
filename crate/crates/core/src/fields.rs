//! The nine fixed top-level protocol modules used for selective pooling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A canonical protocol module. The declaration order is the pooling order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Field {
    SponsorCollaborator,
    Oversight,
    Description,
    Condition,
    Design,
    ArmsIntervention,
    Outcomes,
    Eligibility,
    ContactsLocation,
}

pub const N_FIELDS: usize = 9;

impl Field {
    pub const ALL: [Field; N_FIELDS] = [
        Field::SponsorCollaborator,
        Field::Oversight,
        Field::Description,
        Field::Condition,
        Field::Design,
        Field::ArmsIntervention,
        Field::Outcomes,
        Field::Eligibility,
        Field::ContactsLocation,
    ];

    pub fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::SponsorCollaborator => "sponsor-collaborator",
            Field::Oversight => "oversight",
            Field::Description => "description",
            Field::Condition => "condition",
            Field::Design => "design",
            Field::ArmsIntervention => "arms-intervention",
            Field::Outcomes => "outcomes",
            Field::Eligibility => "eligibility",
            Field::ContactsLocation => "contacts-location",
        }
    }

    /// The module key used by ClinicalTrials.gov JSON exports.
    pub fn ctgov_key(self) -> &'static str {
        match self {
            Field::SponsorCollaborator => "SponsorCollaboratorsModule",
            Field::Oversight => "OversightModule",
            Field::Description => "DescriptionModule",
            Field::Condition => "ConditionsModule",
            Field::Design => "DesignModule",
            Field::ArmsIntervention => "ArmsInterventionsModule",
            Field::Outcomes => "OutcomesModule",
            Field::Eligibility => "EligibilityModule",
            Field::ContactsLocation => "ContactsLocationsModule",
        }
    }

    /// Normalised spellings accepted for this module (see [`normalize_key`]).
    fn aliases(self) -> &'static [&'static str] {
        match self {
            Field::SponsorCollaborator => &["sponsorcollaborator", "sponsorcollaborators"],
            Field::Oversight => &["oversight"],
            Field::Description => &["description"],
            Field::Condition => &["condition", "conditions"],
            Field::Design => &["design"],
            Field::ArmsIntervention => &[
                "armsintervention",
                "armsinterventions",
                "armintervention",
                "arminterventions",
            ],
            Field::Outcomes => &["outcomes", "outcome"],
            Field::Eligibility => &["eligibility"],
            Field::ContactsLocation => &[
                "contactslocation",
                "contactslocations",
                "contactlocation",
                "contactlocations",
            ],
        }
    }

    /// Matches a document key against the canonical modules.
    pub fn from_key(key: &str) -> Option<Field> {
        let norm = normalize_key(key);
        Field::ALL.into_iter().find(|f| f.aliases().contains(&norm.as_str()))
    }
}

/// Lowercases, drops `-`, `_` and spaces, and strips a trailing `module`.
pub fn normalize_key(key: &str) -> String {
    let mut s: String = key
        .chars()
        .filter(|c| !matches!(c, '-' | '_' | ' '))
        .flat_map(char::to_lowercase)
        .collect();
    if s.len() > "module".len() && s.ends_with("module") {
        s.truncate(s.len() - "module".len());
    }
    s
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown field {given:?}; valid fields are: {}", valid_names())]
pub struct UnknownField {
    pub given: String,
}

fn valid_names() -> String {
    Field::ALL.map(Field::name).join(", ")
}

impl FromStr for Field {
    type Err = UnknownField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .or_else(|| Field::from_key(s))
            .ok_or_else(|| UnknownField { given: s.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ctgov_keys_resolve() {
        for f in Field::ALL {
            assert_eq!(Field::from_key(f.ctgov_key()), Some(f));
            assert_eq!(f.name().parse::<Field>().unwrap(), f);
        }
        assert_eq!(
            Field::from_key("contacts_locations_module"),
            Some(Field::ContactsLocation)
        );
        assert_eq!(Field::from_key("StatusModule"), None);
        assert_eq!(Field::from_key("Module"), None);
    }

    #[test]
    fn slots_follow_declaration_order() {
        for (i, f) in Field::ALL.iter().enumerate() {
            assert_eq!(f.slot(), i);
        }
    }

    #[test]
    fn unknown_field_lists_valid_names() {
        let err = "status".parse::<Field>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("design") && msg.contains("contacts-location"), "{msg}");
    }
}
