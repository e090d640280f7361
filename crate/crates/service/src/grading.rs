//! Automated checking of a submitted run.

use vlab_core::TimeSeries;

use crate::model::{Assignment, CheckOutcome, FinalValueRule, GradeReport};

/// Scores a run result against an assignment's criteria and quiz.
///
/// Every value check, the optional property check and every quiz question
/// weigh the same; the score is the passed share in percent. An assignment
/// with nothing to check scores 100.
pub fn grade(
    assignment: &Assignment,
    result: &TimeSeries,
    quiz_answers: Option<&[usize]>,
) -> GradeReport {
    let mut checks = Vec::new();
    for c in &assignment.criteria.checks {
        let measured = result.sample_at(&c.channel, c.probe);
        let (measured, passed, note) = match measured {
            Ok(v) => (
                Some(v),
                (v - c.expected).abs() <= c.rel_tol * c.expected.abs(),
                None,
            ),
            Err(e) => (None, false, Some(e.to_string())),
        };
        checks.push(CheckOutcome {
            channel: c.channel.clone(),
            check: format!("value@{}", vlab_core::sim::format_float(c.probe)),
            measured,
            expected: c.expected,
            passed,
            note,
        });
    }
    if let Some(p) = &assignment.criteria.property {
        let last = result.channel(&p.channel).and_then(|v| v.last().copied());
        let passed = last.is_some_and(|v| match p.property {
            FinalValueRule::FinalValueBelow => v < p.threshold,
            FinalValueRule::FinalValueAbove => v > p.threshold,
        });
        let check = match p.property {
            FinalValueRule::FinalValueBelow => "final_value_below",
            FinalValueRule::FinalValueAbove => "final_value_above",
        };
        checks.push(CheckOutcome {
            channel: p.channel.clone(),
            check: check.into(),
            measured: last,
            expected: p.threshold,
            passed,
            note: last
                .is_none()
                .then(|| format!("no channel `{}`", p.channel)),
        });
    }

    let quiz = assignment.quiz.as_deref().unwrap_or(&[]);
    let quiz_correct = quiz
        .iter()
        .enumerate()
        .filter(|(i, q)| quiz_answers.and_then(|a| a.get(*i)) == Some(&q.correct_index))
        .count();
    let total = checks.len() + quiz.len();
    let passed = checks.iter().filter(|c| c.passed).count() + quiz_correct;
    let score = if total == 0 {
        100.0
    } else {
        100.0 * passed as f64 / total as f64
    };
    GradeReport {
        score,
        checks,
        quiz_correct,
        quiz_total: quiz.len(),
    }
}
