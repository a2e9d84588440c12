use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::FlowError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Fixed, ordered class list shared by every client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelIndex {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelIndex {
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self, FlowError> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(classes.len());
        for (i, c) in classes.iter().enumerate() {
            if index.insert(c.clone(), i).is_some() {
                return Err(FlowError::Schema(format!("duplicate class `{c}`")));
            }
        }
        if classes.is_empty() {
            return Err(FlowError::Schema("label index needs at least one class".into()));
        }
        Ok(Self { classes, index })
    }

    /// The ten TON-IoT network classes, in the column order of the
    /// per-client distribution table.
    pub fn ton_iot() -> Self {
        Self::new(TON_IOT_CLASSES).expect("static class list is valid")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.classes.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

impl TryFrom<Vec<String>> for LabelIndex {
    type Error = FlowError;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<LabelIndex> for Vec<String> {
    fn from(l: LabelIndex) -> Self {
        l.classes
    }
}

pub const TON_IOT_CLASSES: [&str; 10] = [
    "scanning",
    "ddos",
    "xss",
    "password",
    "dos",
    "normal",
    "backdoor",
    "injection",
    "ransomware",
    "mitm",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Column layout of a flow CSV: which columns are features, which one is
/// the label, which are dropped, and which column keys the partitioning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
    partition_key: String,
    classes: LabelIndex,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>, partition_key: impl Into<String>, classes: LabelIndex) -> Result<Self, FlowError> {
        let partition_key = partition_key.into();
        let labels = columns.iter().filter(|c| c.kind == ColumnKind::Label).count();
        if labels != 1 {
            return Err(FlowError::Schema(format!(
                "schema needs exactly one label column, found {labels}"
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(FlowError::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        match columns.iter().find(|c| c.name == partition_key) {
            Some(c) if c.kind == ColumnKind::Drop => {}
            Some(_) => {
                return Err(FlowError::Schema(format!(
                    "partition key `{partition_key}` must be a drop column so it never becomes a feature"
                )))
            }
            None => {
                return Err(FlowError::Schema(format!(
                    "partition key `{partition_key}` is not a column"
                )))
            }
        }
        Ok(Self {
            columns,
            partition_key,
            classes,
        })
    }

    /// TON-IoT network flow layout: 46 columns, 38 features after dropping
    /// the timestamp, endpoints, the binary attack flag and `http_referrer`.
    pub fn ton_iot() -> Self {
        use ColumnKind::*;
        let cols: [(&str, ColumnKind); 46] = [
            ("ts", Drop),
            ("src_ip", Drop),
            ("src_port", Drop),
            ("dst_ip", Drop),
            ("dst_port", Drop),
            ("proto", Categorical),
            ("service", Categorical),
            ("duration", Numeric),
            ("src_bytes", Numeric),
            ("dst_bytes", Numeric),
            ("conn_state", Categorical),
            ("missed_bytes", Numeric),
            ("src_pkts", Numeric),
            ("src_ip_bytes", Numeric),
            ("dst_pkts", Numeric),
            ("dst_ip_bytes", Numeric),
            ("dns_query", Categorical),
            ("dns_qclass", Numeric),
            ("dns_qtype", Numeric),
            ("dns_rcode", Numeric),
            ("dns_AA", Categorical),
            ("dns_RD", Categorical),
            ("dns_RA", Categorical),
            ("dns_rejected", Categorical),
            ("ssl_version", Categorical),
            ("ssl_cipher", Categorical),
            ("ssl_resumed", Categorical),
            ("ssl_established", Categorical),
            ("ssl_subject", Categorical),
            ("ssl_issuer", Categorical),
            ("http_trans_depth", Categorical),
            ("http_method", Categorical),
            ("http_uri", Categorical),
            ("http_referrer", Drop),
            ("http_version", Categorical),
            ("http_request_body_len", Numeric),
            ("http_response_body_len", Numeric),
            ("http_status_code", Numeric),
            ("http_user_agent", Categorical),
            ("http_orig_mime_types", Categorical),
            ("http_resp_mime_types", Categorical),
            ("weird_name", Categorical),
            ("weird_addl", Categorical),
            ("weird_notice", Categorical),
            ("label", Drop),
            ("type", Label),
        ];
        let columns = cols
            .iter()
            .map(|&(name, kind)| Column {
                name: name.to_string(),
                kind,
            })
            .collect();
        Self::new(columns, "dst_ip", LabelIndex::ton_iot()).expect("static schema is valid")
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn partition_key(&self) -> &str {
        &self.partition_key
    }

    pub fn classes(&self) -> &LabelIndex {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn feature_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns
            .iter()
            .filter(|c| matches!(c.kind, ColumnKind::Numeric | ColumnKind::Categorical))
    }

    pub fn n_features_after_drop(&self) -> usize {
        self.feature_columns().count()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.feature_columns().map(|c| c.name.as_str()).collect()
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        self.feature_columns()
            .map(|c| match c.kind {
                ColumnKind::Numeric => FeatureKind::Numeric,
                _ => FeatureKind::Categorical,
            })
            .collect()
    }

    pub fn dropped(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Drop)
            .map(|c| c.name.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ton_iot_layout() {
        let s = FeatureSchema::ton_iot();
        assert_eq!(s.n_features_after_drop(), 38);
        assert_eq!(s.n_classes(), 10);
        let dropped = s.dropped();
        for name in ["ts", "src_ip", "src_port", "dst_ip", "dst_port"] {
            assert!(dropped.contains(&name), "{name} must be dropped");
        }
        let features = s.feature_names();
        for name in ["ts", "src_ip", "src_port", "dst_ip", "dst_port", "type"] {
            assert!(!features.contains(&name), "{name} must not be a feature");
        }
        assert_eq!(s.columns().iter().filter(|c| c.kind == ColumnKind::Label).count(), 1);
    }

    #[test]
    fn rejects_bad_schemas() {
        let classes = LabelIndex::new(["a", "b"]).unwrap();
        let col = |n: &str, k| Column { name: n.into(), kind: k };
        let no_label = vec![col("dst_ip", ColumnKind::Drop), col("x", ColumnKind::Numeric)];
        assert!(FeatureSchema::new(no_label, "dst_ip", classes.clone()).is_err());
        let key_as_feature = vec![col("dst_ip", ColumnKind::Categorical), col("y", ColumnKind::Label)];
        assert!(FeatureSchema::new(key_as_feature, "dst_ip", classes.clone()).is_err());
        assert!(LabelIndex::new(["a", "a"]).is_err());
    }

    #[test]
    fn label_index_bijective() {
        let l = LabelIndex::ton_iot();
        for (i, c) in l.classes().iter().enumerate() {
            assert_eq!(l.id(c), Some(i));
            assert_eq!(l.name(i), Some(c.as_str()));
        }
        let json = serde_json_like(&l);
        assert_eq!(json.len(), 10);
    }

    fn serde_json_like(l: &LabelIndex) -> Vec<String> {
        l.clone().into()
    }
}
