use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::labeling::PromptTemplates;
use crate::providers::ChatClient;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clarity {
    pub precision: f64,
    pub unambiguity: f64,
    pub consistency: f64,
    pub accessibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalCoherence {
    pub gradational_specificity: f64,
    pub parent_child_coherence: f64,
    /// Listed in the prompt but not always returned or reported.
    pub consistency: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Orthogonality {
    pub distinctiveness: f64,
    pub non_overlap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Completeness {
    pub domain_coverage: f64,
    pub depth: f64,
    pub balance: f64,
}

/// Raw judge criteria. Each value lies in [1, 5]; values parsed from a single
/// completion are integers, averages over runs need not be.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub clarity: Clarity,
    pub hierarchical_coherence: HierarchicalCoherence,
    pub orthogonality: Orthogonality,
    pub completeness: Completeness,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl JudgeScores {
    pub fn raw(&self) -> Vec<f64> {
        let c = &self.clarity;
        let h = &self.hierarchical_coherence;
        let o = &self.orthogonality;
        let m = &self.completeness;
        let mut v = vec![c.precision, c.unambiguity, c.consistency, c.accessibility];
        v.extend([h.gradational_specificity, h.parent_child_coherence]);
        v.extend(h.consistency);
        v.extend([o.distinctiveness, o.non_overlap, m.domain_coverage, m.depth, m.balance]);
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.raw().into_iter().find(|x| !(1.0..=5.0).contains(x)) {
            Some(x) => Err(Error::Parse(format!("judge score {x} outside [1, 5]"))),
            None => Ok(()),
        }
    }

    pub fn clarity_avg(&self) -> f64 {
        let c = &self.clarity;
        mean(&[c.precision, c.unambiguity, c.consistency, c.accessibility])
    }

    pub fn coherence_avg(&self) -> f64 {
        let h = &self.hierarchical_coherence;
        let mut v = vec![h.gradational_specificity, h.parent_child_coherence];
        v.extend(h.consistency);
        mean(&v)
    }

    pub fn orthogonality_avg(&self) -> f64 {
        mean(&[self.orthogonality.distinctiveness, self.orthogonality.non_overlap])
    }

    pub fn completeness_avg(&self) -> f64 {
        let m = &self.completeness;
        mean(&[m.domain_coverage, m.depth, m.balance])
    }

    /// Clarity, hierarchical coherence, orthogonality, completeness.
    pub fn category_averages(&self) -> [f64; 4] {
        [self.clarity_avg(), self.coherence_avg(), self.orthogonality_avg(), self.completeness_avg()]
    }
}

fn norm(key: &str) -> String {
    key.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str) -> Option<&'a Value> {
    let want = norm(name);
    obj.iter().find(|(k, _)| norm(k) == want).map(|(_, v)| v)
}

fn score(v: &Value, at: &str) -> Result<f64> {
    let v = match v {
        Value::Object(o) => field(o, "score").ok_or_else(|| Error::Parse(format!("{at}: no score")))?,
        other => other,
    };
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(|| Error::Parse(format!("{at}: not a number")))?;
    if x.fract() != 0.0 || !(1.0..=5.0).contains(&x) {
        return Err(Error::Parse(format!("{at}: score {x} is not an integer in [1, 5]")));
    }
    Ok(x)
}

fn json_body(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (end > start).then(|| &reply[start..=end])
}

/// Parses a judge completion. `Ok(None)` means the reply held no usable
/// JSON; `Err` means JSON was present but a score was invalid or missing.
pub fn parse_judge_reply(reply: &str) -> Result<Option<JudgeScores>> {
    let Some(body) = json_body(reply) else { return Ok(None) };
    let Ok(Value::Object(root)) = serde_json::from_str::<Value>(body) else {
        return Ok(None);
    };
    let category = |name: &str| -> Result<&serde_json::Map<String, Value>> {
        match field(&root, name) {
            Some(Value::Object(o)) => Ok(o),
            _ => Err(Error::Parse(format!("judge reply lacks category {name}"))),
        }
    };
    let get = |cat: &serde_json::Map<String, Value>, c: &str, name: &str| -> Result<f64> {
        let v = field(cat, name).ok_or_else(|| Error::Parse(format!("{c}: missing {name}")))?;
        score(v, &format!("{c}.{name}"))
    };
    let cl = category("Clarity")?;
    let hc = category("Hierarchical Coherence")?;
    let or = category("Orthogonality")?;
    let co = category("Completeness")?;
    let scores = JudgeScores {
        clarity: Clarity {
            precision: get(cl, "Clarity", "Precision")?,
            unambiguity: get(cl, "Clarity", "Unambiguity")?,
            consistency: get(cl, "Clarity", "Consistency")?,
            accessibility: get(cl, "Clarity", "Accessibility")?,
        },
        hierarchical_coherence: HierarchicalCoherence {
            gradational_specificity: get(hc, "Hierarchical Coherence", "Gradational Specificity")?,
            parent_child_coherence: get(hc, "Hierarchical Coherence", "Parent-Child Coherence")?,
            consistency: field(hc, "Consistency")
                .map(|v| score(v, "Hierarchical Coherence.Consistency"))
                .transpose()?,
        },
        orthogonality: Orthogonality {
            distinctiveness: get(or, "Orthogonality", "Distinctiveness")?,
            non_overlap: get(or, "Orthogonality", "Non-overlap")?,
        },
        completeness: Completeness {
            domain_coverage: get(co, "Completeness", "Domain Coverage")?,
            depth: get(co, "Completeness", "Depth")?,
            balance: get(co, "Completeness", "Balance")?,
        },
    };
    Ok(Some(scores))
}

/// Scores a taxonomy with the judge prompt. Malformed JSON is asked for once
/// more; out-of-range scores are an error.
pub fn judge_taxonomy(t: &Taxonomy, chat: &ChatClient, templates: &PromptTemplates) -> Result<JudgeScores> {
    chat.config().require_zero_temperature()?;
    let view = serde_json::to_string_pretty(&t.judge_view())?;
    let prompt = templates.render_judge(&view);
    for attempt in 0..2 {
        let reply = chat.chat_complete(&prompt)?;
        match parse_judge_reply(&reply)? {
            Some(s) => return Ok(s),
            None if attempt == 0 => tracing::warn!("judge reply was not JSON; asking again"),
            None => return Err(Error::Parse(format!("judge reply was not JSON: {reply:?}"))),
        }
    }
    unreachable!()
}
