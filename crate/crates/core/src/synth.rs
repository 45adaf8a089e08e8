//! Seeded synthetic ARROW essays. Each tag has its own cue phrases, so a
//! small model can learn the mapping.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::document::{AnnotatedDocument, AnnotationSpan, Rater, Unit};
use crate::schemes::SchemeId;

const TOPICS: &[&str] = &[
    "school uniforms",
    "cell phones",
    "summer homework",
    "team sports",
    "online classes",
    "electric cars",
    "city parks",
    "music lessons",
    "school lunches",
];

const FILLER: &[&str] = &["really", "clearly", "often", "surely", "mostly"];

fn template(tag: &str, rng: &mut ChaCha8Rng) -> &'static str {
    let opts: &[&str] = match tag {
        "T" => &["first of all we look at {t}", "this essay is about {t}"],
        "I1" => &[
            "the question is whether {t} matter",
            "people wonder about {t}",
        ],
        "I2" => &["i believe {t} are good", "in my opinion {t} help us"],
        "E1" => &[
            "for example my friend uses {t}",
            "for instance my class tried {t}",
        ],
        "E2" => &["research shows {t} work", "a study found that {t} work"],
        "O" => &["some argue {t} are bad", "others say {t} cost too much"],
        "C" => &["in conclusion {t} are worth it", "to sum up {t} matter"],
        _ => &["the weather was nice that day", "we had lunch after that"],
    };
    opts.choose(rng).expect("non-empty")
}

fn sentence(tag: &str, topic: &str, rng: &mut ChaCha8Rng) -> String {
    let mut s = template(tag, rng).replace("{t}", topic);
    if rng.random_bool(0.3) {
        s.push(' ');
        s.push_str(FILLER.choose(rng).expect("non-empty"));
    }
    let mut c = s.chars();
    let first = c.next().expect("non-empty").to_uppercase().to_string();
    format!("{first}{}.", c.as_str())
}

/// Prompt id of the `i`-th synthetic prompt.
pub fn prompt_name(i: usize) -> String {
    format!("prompt{}", i + 1)
}

/// `n` essays spread round-robin over `prompts` prompts, annotated by
/// `rater` (pass `None` for unannotated text).
pub fn arrow_essays(
    n: usize,
    prompts: usize,
    seed: u64,
    rater: Option<Rater>,
) -> Vec<AnnotatedDocument> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prompts = prompts.max(1);
    (0..n)
        .map(|i| {
            let p = i % prompts;
            let topic = TOPICS[p % TOPICS.len()];
            let mut paras: Vec<Vec<&str>> =
                vec![vec!["T", if rng.random_bool(0.5) { "I1" } else { "I2" }]];
            for _ in 0..rng.random_range(1..=2) {
                let mut body = vec![*["E1", "E2", "O"].choose(&mut rng).expect("non-empty")];
                body.push(
                    *["E1", "E2", "O", "I2", "None"]
                        .choose(&mut rng)
                        .expect("non-empty"),
                );
                paras.push(body);
            }
            paras.push(vec!["C"]);
            let texts: Vec<String> = paras
                .iter()
                .map(|tags| {
                    tags.iter()
                        .map(|t| sentence(t, topic, &mut rng))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            let mut doc = AnnotatedDocument::from_paragraphs(
                format!("essay{:04}", i + 1),
                &texts,
                SchemeId::Arrow,
            );
            doc.prompt = Some(prompt_name(p));
            if let Some(rater) = rater {
                let tags: Vec<&str> = paras.concat();
                debug_assert_eq!(tags.len(), doc.sentences.len());
                for (si, t) in tags.iter().enumerate().filter(|(_, t)| **t != "None") {
                    doc.spans.push(AnnotationSpan {
                        span_id: format!("S{}", si + 1),
                        tag: (*t).into(),
                        unit: Unit::Sentence,
                        start: si,
                        end: si + 1,
                        rater,
                    });
                }
            }
            doc
        })
        .collect()
}
