use std::collections::BTreeMap;

use serde::Serialize;

use super::{AnnotationError, VideoAnnotation};
use crate::text::tokenize;

/// Verb families counted by [`stats`], each with the surface forms that
/// count towards it.
pub const VERB_LEXICON: [(&str, &[&str]); 4] = [
    ("walk", &["walk", "walks", "walked", "walking"]),
    ("turn", &["turn", "turns", "turned", "turning"]),
    ("look", &["look", "looks", "looked", "looking"]),
    ("stand", &["stand", "stands", "stood", "standing"]),
];

/// Published size of the original corpus, kept as documentation for
/// comparing generated corpora; nothing in this crate depends on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReferenceScale {
    pub videos: usize,
    pub captions: usize,
    pub split_videos: [usize; 3],
    pub split_captions: [usize; 3],
}

pub const REFERENCE_SCALE: ReferenceScale = ReferenceScale {
    videos: 1012,
    captions: 7820,
    split_videos: [584, 205, 223],
    split_captions: [4014, 1842, 1964],
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub videos: usize,
    pub captions: usize,
    pub mean_caption_length: f64,
    /// Caption length in tokens → number of captions.
    pub caption_length_histogram: BTreeMap<usize, usize>,
    /// Persons in a video → number of videos.
    pub persons_per_video: BTreeMap<usize, usize>,
    /// Verb family → occurrences across all captions.
    pub verb_counts: BTreeMap<String, usize>,
    pub normal_videos: usize,
    pub anomaly_videos: usize,
}

pub fn stats(corpus: &[VideoAnnotation]) -> Result<CorpusStats, AnnotationError> {
    if corpus.is_empty() {
        return Err(AnnotationError::Contract(
            "statistics need at least one video".into(),
        ));
    }
    let mut lengths = BTreeMap::new();
    let mut persons = BTreeMap::new();
    let mut verbs: BTreeMap<String, usize> = VERB_LEXICON
        .iter()
        .map(|(v, _)| (v.to_string(), 0))
        .collect();
    let (mut captions, mut total_tokens, mut anomalies) = (0usize, 0usize, 0usize);
    for video in corpus {
        *persons.entry(video.persons.len()).or_insert(0) += 1;
        anomalies += usize::from(video.scene_label.is_anomaly());
        for p in &video.persons {
            let tokens = tokenize(&p.caption);
            captions += 1;
            total_tokens += tokens.len();
            *lengths.entry(tokens.len()).or_insert(0) += 1;
            for token in &tokens {
                if let Some((family, _)) = VERB_LEXICON
                    .iter()
                    .find(|(_, forms)| forms.contains(&token.as_str()))
                {
                    *verbs.get_mut(*family).expect("seeded above") += 1;
                }
            }
        }
    }
    Ok(CorpusStats {
        videos: corpus.len(),
        captions,
        mean_caption_length: if captions == 0 {
            0.0
        } else {
            total_tokens as f64 / captions as f64
        },
        caption_length_histogram: lengths,
        persons_per_video: persons,
        verb_counts: verbs,
        normal_videos: corpus.len() - anomalies,
        anomaly_videos: anomalies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::parse;

    fn video(captions: &[&str]) -> VideoAnnotation {
        let mut v = parse(crate::annotation::tests::MINIMAL).unwrap();
        let template = v.persons[0].clone();
        v.persons = captions
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut p = template.clone();
                p.person_index = i + 1;
                p.color_index = i;
                p.caption = c.to_string();
                p
            })
            .collect();
        v
    }

    #[test]
    fn single_caption_of_34_tokens() {
        let caption = vec!["word"; 34].join(" ");
        let s = stats(&[video(&[&caption])]).unwrap();
        assert_eq!(s.mean_caption_length, 34.0);
        assert_eq!(s.caption_length_histogram, BTreeMap::from([(34, 1)]));
    }

    #[test]
    fn constructed_fixture_counts() {
        let a = video(&["he walks then stands", "she walked and looked around"]);
        let mut b = video(&["turning", "x y", "walk walk"]);
        b.scene_label = crate::annotation::SceneLabel::Fighting;
        let s = stats(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.videos, 2);
        assert_eq!(s.captions, 5);
        assert_eq!(s.persons_per_video, BTreeMap::from([(2, 1), (3, 1)]));
        assert_eq!(
            s.caption_length_histogram,
            BTreeMap::from([(1, 1), (2, 2), (4, 1), (5, 1)])
        );
        assert_eq!(s.verb_counts["walk"], 4);
        assert_eq!(s.verb_counts["stand"], 1);
        assert_eq!(s.verb_counts["look"], 1);
        assert_eq!(s.verb_counts["turn"], 1);
        assert_eq!((s.normal_videos, s.anomaly_videos), (1, 1));
        assert_eq!(stats(&[b, a]).unwrap(), s);
        assert!(stats(&[]).is_err());
    }
}
