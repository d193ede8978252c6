use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Lowercases and joins alphanumeric runs with single hyphens.
///
/// `"Mission District"` becomes `"mission-district"`; punctuation such as the
/// slash in `"Castro/Upper Market"` is treated like a space.
pub fn slugify(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_hyphen = false;
    for ch in name.chars() {
        if ch.is_alphanumeric() {
            if pending_hyphen && !out.is_empty() {
                out.push('-');
            }
            pending_hyphen = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_hyphen = true;
        }
    }
    out
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(
    /// Canonical lowercase crime category token, e.g. `assault`.
    CategoryId
);
string_id!(
    /// District slug; the total order on ids drives every tie-break.
    NeighborhoodId
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub display_name: String,
}

/// Ordered set of known categories. Index positions are stable and used as
/// the category axis of the aggregate cube.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Category>", into = "Vec<Category>")]
pub struct CategoryRegistry {
    categories: Vec<Category>,
    #[serde(skip)]
    index: HashMap<CategoryId, usize>,
}

/// Categories every registry must contain.
pub const REQUIRED_CATEGORIES: [&str; 7] = [
    "arson",
    "theft",
    "burglary",
    "assault",
    "fraud",
    "robbery",
    "motor-vehicle-theft",
];

impl CategoryRegistry {
    pub fn new(categories: Vec<Category>) -> Result<Self, ModelError> {
        let mut index = HashMap::with_capacity(categories.len());
        for (i, c) in categories.iter().enumerate() {
            if c.id.as_str().is_empty() || c.id.as_str() != c.id.as_str().to_lowercase() {
                return Err(ModelError::InvalidCategoryId(c.id.to_string()));
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateCategory(c.id.to_string()));
            }
        }
        for required in REQUIRED_CATEGORIES {
            if !index.contains_key(&CategoryId::from(required)) {
                return Err(ModelError::MissingRequiredCategory(required.to_string()));
            }
        }
        Ok(Self { categories, index })
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Category> {
        self.categories.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &CategoryId> {
        self.categories.iter().map(|c| &c.id)
    }

    pub fn contains(&self, id: &CategoryId) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &CategoryId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &CategoryId) -> Option<&Category> {
        self.position(id).map(|i| &self.categories[i])
    }

    /// Looks up a category by id; unknown ids are an error.
    pub fn resolve(&self, id: &str) -> Result<CategoryId, ModelError> {
        let id = CategoryId::new(id.trim().to_lowercase());
        if self.contains(&id) {
            Ok(id)
        } else {
            Err(ModelError::UnknownCategory(id.to_string()))
        }
    }
}

impl TryFrom<Vec<Category>> for CategoryRegistry {
    type Error = ModelError;

    fn try_from(v: Vec<Category>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<CategoryRegistry> for Vec<Category> {
    fn from(r: CategoryRegistry) -> Self {
        r.categories
    }
}
