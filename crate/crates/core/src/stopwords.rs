/// English function words plus verbs common in abstract boilerplate.
pub const ENGLISH: &[&str] = &[
    "a", "about", "above", "across", "after", "again", "against", "all", "almost", "along",
    "already", "also", "although", "always", "am", "among", "an", "and", "another", "any",
    "are", "around", "as", "at", "be", "because", "been", "before", "being", "below",
    "between", "both", "but", "by", "can", "cannot", "could", "did", "do", "does", "doing",
    "done", "down", "due", "during", "each", "either", "enough", "especially", "etc", "even",
    "ever", "every", "few", "for", "from", "further", "furthermore", "had", "has", "have",
    "having", "he", "her", "here", "hers", "him", "his", "how", "however", "i", "if", "in",
    "into", "is", "it", "its", "itself", "just", "less", "like", "made", "make", "makes",
    "many", "may", "me", "might", "more", "moreover", "most", "much", "must", "my", "neither",
    "no", "nor", "not", "now", "of", "off", "often", "on", "once", "one", "only", "or",
    "other", "others", "otherwise", "our", "ours", "out", "over", "own", "per", "rather",
    "same", "several", "she", "should", "since", "so", "some", "such", "than", "that", "the",
    "their", "theirs", "them", "themselves", "then", "there", "therefore", "these", "they",
    "this", "those", "though", "through", "thus", "to", "too", "two", "under", "until", "up",
    "upon", "us", "very", "via", "was", "we", "well", "were", "what", "when", "where",
    "whereas", "whether", "which", "while", "who", "whom", "whose", "why", "will", "with",
    "within", "without", "would", "yet", "you", "your", "yours",
    // academic boilerplate
    "achieve", "achieves", "based", "demonstrate", "demonstrates", "existing", "experiment",
    "experiments", "first", "introduce", "introduces", "large", "new", "novel", "present",
    "presents", "propose", "proposed", "proposes", "provide", "provides", "show", "shows",
    "significantly", "state-of-the-art", "study", "use", "used", "uses", "using", "work",
];

/// Domain-generic terms that make poor graph entities.
pub const DOMAIN_GENERIC: &[&str] = &["paper", "model", "approach", "method", "task", "results"];

pub fn default_stopwords() -> std::collections::BTreeSet<String> {
    ENGLISH.iter().chain(DOMAIN_GENERIC).map(|s| s.to_string()).collect()
}
