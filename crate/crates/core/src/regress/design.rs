use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{ColumnKind, ColumnRole, DataError, Dataset, SurvivalOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    Logistic,
    Cox,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Linear => "linear",
            Family::Logistic => "logistic",
            Family::Cox => "cox",
        })
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Family::Linear),
            "logistic" => Ok(Family::Logistic),
            "cox" => Ok(Family::Cox),
            other => Err(format!("unknown family '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Continuous(Vec<f64>),
    /// 0/1 labels.
    Binary(Vec<f64>),
    Survival(Vec<SurvivalOutcome>),
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Continuous(v) | Response::Binary(v) => v.len(),
            Response::Survival(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn matches(&self, family: Family) -> bool {
        matches!(
            (self, family),
            (Response::Continuous(_), Family::Linear)
                | (Response::Binary(_), Family::Logistic)
                | (Response::Survival(_), Family::Cox)
        )
    }

    pub fn select(&self, rows: &[usize]) -> Response {
        match self {
            Response::Continuous(v) => Response::Continuous(rows.iter().map(|&i| v[i]).collect()),
            Response::Binary(v) => Response::Binary(rows.iter().map(|&i| v[i]).collect()),
            Response::Survival(v) => Response::Survival(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// One scientific variable: a name and the design columns representing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub name: String,
    pub columns: Vec<usize>,
    /// Set once the variable has been replaced by a basis expansion.
    pub expanded: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DesignError {
    #[error("column '{column}' has {found} rows, response has {expected}")]
    RowMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("response type does not match family {0}")]
    ResponseFamily(Family),
    #[error("column {0} is not assigned to exactly one group")]
    BadGrouping(usize),
    #[error("duplicate group or column name '{0}'")]
    DuplicateName(String),
    #[error("non-finite value in column '{0}'")]
    NonFinite(String),
    #[error("binary response must contain only 0 and 1")]
    BinaryResponse,
    #[error("{0}")]
    Roles(String),
    #[error("need at least 2 rows")]
    TooFewRows,
}

impl From<DataError> for DesignError {
    fn from(e: DataError) -> Self {
        DesignError::Roles(e.to_string())
    }
}

/// Model-ready matrix with named variable groups, a family and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n_rows: usize,
    n_cols: usize,
    /// Row-major values.
    data: Vec<f64>,
    column_names: Vec<String>,
    groups: Vec<Group>,
    family: Family,
    response: Response,
    /// Row indices by decreasing time (Cox only), ties in row order.
    time_order: Vec<usize>,
    /// Half-open ranges into `time_order` sharing one time value.
    tie_runs: Vec<(usize, usize)>,
}

impl Design {
    /// Builds a design from named columns. Without explicit `groups` each
    /// column becomes its own group named after the column.
    pub fn new(
        columns: Vec<(String, Vec<f64>)>,
        groups: Option<Vec<Group>>,
        family: Family,
        response: Response,
    ) -> Result<Self, DesignError> {
        let n_rows = response.len();
        if n_rows < 2 {
            return Err(DesignError::TooFewRows);
        }
        if !response.matches(family) {
            return Err(DesignError::ResponseFamily(family));
        }
        if let Response::Binary(y) = &response {
            if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(DesignError::BinaryResponse);
            }
        }
        let mut names = HashSet::new();
        for (name, values) in &columns {
            if !names.insert(name.as_str()) {
                return Err(DesignError::DuplicateName(name.clone()));
            }
            if values.len() != n_rows {
                return Err(DesignError::RowMismatch {
                    column: name.clone(),
                    expected: n_rows,
                    found: values.len(),
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(DesignError::NonFinite(name.clone()));
            }
        }
        let n_cols = columns.len();
        let groups = groups.unwrap_or_else(|| {
            columns
                .iter()
                .enumerate()
                .map(|(j, (name, _))| Group {
                    name: name.clone(),
                    columns: vec![j],
                    expanded: false,
                })
                .collect()
        });
        let mut owner = vec![0usize; n_cols];
        let mut group_names = HashSet::new();
        for g in &groups {
            if !group_names.insert(g.name.as_str()) {
                return Err(DesignError::DuplicateName(g.name.clone()));
            }
            for &c in &g.columns {
                if c >= n_cols {
                    return Err(DesignError::BadGrouping(c));
                }
                owner[c] += 1;
            }
        }
        if let Some(c) = owner.iter().position(|&k| k != 1) {
            return Err(DesignError::BadGrouping(c));
        }

        let mut data = vec![0.0; n_rows * n_cols];
        for (j, (_, values)) in columns.iter().enumerate() {
            for (i, v) in values.iter().enumerate() {
                data[i * n_cols + j] = *v;
            }
        }
        let (time_order, tie_runs) = match &response {
            Response::Survival(s) => time_runs(s),
            _ => (Vec::new(), Vec::new()),
        };
        Ok(Self {
            n_rows,
            n_cols,
            data,
            column_names: columns.into_iter().map(|(n, _)| n).collect(),
            groups,
            family,
            response,
            time_order,
            tie_runs,
        })
    }

    /// Design from the roles recorded in the dataset schema: every
    /// `Covariate` column becomes a single-column group, in dataset order.
    pub fn from_dataset(ds: &Dataset, family: Family) -> Result<Self, DesignError> {
        let one = |role: ColumnRole, what: &str| -> Result<&str, DesignError> {
            match ds.names_with_role(role)[..] {
                [name] => Ok(name),
                [] => Err(DesignError::Roles(format!(
                    "{family} family needs a {what} column"
                ))),
                _ => Err(DesignError::Roles(format!(
                    "{family} family needs exactly one {what} column"
                ))),
            }
        };
        let response = match family {
            Family::Linear => {
                Response::Continuous(ds.column(one(ColumnRole::Response, "response")?)?.to_vec())
            }
            Family::Logistic => {
                let name = one(ColumnRole::Response, "response")?;
                if ds.spec(name)?.kind != ColumnKind::Binary
                    && ds.column(name)?.iter().any(|v| *v != 0.0 && *v != 1.0)
                {
                    return Err(DesignError::BinaryResponse);
                }
                Response::Binary(ds.column(name)?.to_vec())
            }
            Family::Cox => {
                let time = ds.column(one(ColumnRole::Time, "time")?)?;
                let event = ds.column(one(ColumnRole::Event, "event")?)?;
                Response::Survival(
                    time.iter()
                        .zip(event)
                        .map(|(&t, &e)| SurvivalOutcome::new(t, e == 1.0))
                        .collect(),
                )
            }
        };
        let columns = ds
            .columns()
            .iter()
            .filter(|c| c.spec.role == ColumnRole::Covariate)
            .map(|c| (c.spec.name.clone(), c.values.clone()))
            .collect();
        Self::new(columns, None, family, response)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn response(&self) -> &Response {
        &self.response
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&Group> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub(crate) fn time_order(&self) -> &[usize] {
        &self.time_order
    }

    pub(crate) fn tie_runs(&self) -> &[(usize, usize)] {
        &self.tie_runs
    }

    fn columns_named(&self) -> Vec<(String, Vec<f64>)> {
        (0..self.n_cols)
            .map(|j| (self.column_names[j].clone(), self.column(j)))
            .collect()
    }

    /// Design restricted to the listed groups, in the order listed. An empty
    /// list gives the null model (intercept only, or a zero-column Cox model).
    pub fn select_groups(&self, keep: &[usize]) -> Design {
        let mut columns = Vec::new();
        let mut groups = Vec::with_capacity(keep.len());
        for &gi in keep {
            let g = &self.groups[gi];
            let start = columns.len();
            for &c in &g.columns {
                columns.push((self.column_names[c].clone(), self.column(c)));
            }
            groups.push(Group {
                name: g.name.clone(),
                columns: (start..columns.len()).collect(),
                expanded: g.expanded,
            });
        }
        Design::new(columns, Some(groups), self.family, self.response.clone())
            .expect("a group subset of a valid design is valid")
    }

    /// Design restricted to `rows` (in the order given), groups unchanged.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Design, DesignError> {
        let columns = (0..self.n_cols)
            .map(|j| {
                let v = rows.iter().map(|&i| self.get(i, j)).collect();
                (self.column_names[j].clone(), v)
            })
            .collect();
        Design::new(
            columns,
            Some(self.groups.clone()),
            self.family,
            self.response.select(rows),
        )
    }

    /// Copy with every column of group `gi` overwritten by zeros.
    pub fn with_zeroed_group(&self, gi: usize) -> Design {
        let mut d = self.clone();
        for &c in &self.groups[gi].columns {
            for i in 0..d.n_rows {
                d.data[i * d.n_cols + c] = 0.0;
            }
        }
        d
    }

    /// Replaces the single column of group `gi` by `new_columns`, all owned
    /// by that group, which is then marked as expanded.
    pub(crate) fn replace_group(
        &self,
        gi: usize,
        new_columns: Vec<(String, Vec<f64>)>,
    ) -> Result<Design, DesignError> {
        let old = self.groups[gi].columns[0];
        let k = new_columns.len();
        let mut columns = self.columns_named();
        columns.splice(old..=old, new_columns);
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let shift = |c: usize| if c > old { c + k - 1 } else { c };
                if g.name == self.groups[gi].name {
                    Group {
                        name: g.name.clone(),
                        columns: (old..old + k).collect(),
                        expanded: true,
                    }
                } else {
                    Group {
                        name: g.name.clone(),
                        columns: g.columns.iter().map(|&c| shift(c)).collect(),
                        expanded: g.expanded,
                    }
                }
            })
            .collect();
        Design::new(columns, Some(groups), self.family, self.response.clone())
    }
}

fn time_runs(s: &[SurvivalOutcome]) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].time.total_cmp(&s[a].time).then(a.cmp(&b)));
    let mut runs = Vec::new();
    let mut start = 0;
    for k in 1..=order.len() {
        if k == order.len() || s[order[k]].time != s[order[start]].time {
            runs.push((start, k));
            start = k;
        }
    }
    (order, runs)
}
