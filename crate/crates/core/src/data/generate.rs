//! Deterministic template-based generator of annotated lawsuit documents.
//!
//! Every document is `CAPTION, FACTS{1..4}, CLAIM, RULING, OTHER{0..2}`.
//! Templates are written as plain text; `{SLOT}` words are replaced by
//! fillers that carry gold entity spans. A few neutral templates are shared
//! between the FACTS and OTHER pools, so those sentences can only be
//! classified from their position in the document.

use super::bio::{bio_encode, TagSpan};
use super::corpus::{Document, Sentence};
use super::text::tokenize;
use crate::linalg::Rng;

const FIRST_NAMES: [&str; 50] = [
    "James",
    "Mary",
    "Robert",
    "Patricia",
    "John",
    "Jennifer",
    "Michael",
    "Linda",
    "David",
    "Elizabeth",
    "William",
    "Barbara",
    "Richard",
    "Susan",
    "Joseph",
    "Jessica",
    "Thomas",
    "Sarah",
    "Charles",
    "Karen",
    "Daniel",
    "Nancy",
    "Matthew",
    "Lisa",
    "Anthony",
    "Betty",
    "Mark",
    "Margaret",
    "Donald",
    "Sandra",
    "Steven",
    "Ashley",
    "Paul",
    "Kimberly",
    "Andrew",
    "Emily",
    "Joshua",
    "Donna",
    "Kenneth",
    "Michelle",
    "Kevin",
    "Carol",
    "Brian",
    "Amanda",
    "George",
    "Melissa",
    "Edward",
    "Deborah",
    "Ronald",
    "Stephanie",
];

const LAST_NAMES: [&str; 30] = [
    "Smith",
    "Johnson",
    "Williams",
    "Brown",
    "Jones",
    "Garcia",
    "Miller",
    "Davis",
    "Rodriguez",
    "Martinez",
    "Hernandez",
    "Lopez",
    "Gonzalez",
    "Wilson",
    "Anderson",
    "Thomas",
    "Taylor",
    "Moore",
    "Jackson",
    "Martin",
    "Lee",
    "Perez",
    "Thompson",
    "White",
    "Harris",
    "Sanchez",
    "Clark",
    "Ramirez",
    "Lewis",
    "Robinson",
];

const COMPANIES: [&str; 12] = [
    "Acme Logistics Inc",
    "Globex Corporation",
    "Initech Systems LLC",
    "Umbrella Holdings",
    "Vandelay Industries",
    "Soylent Foods LLC",
    "Cyberdyne Robotics",
    "Tyrell Manufacturing Company",
    "Massive Dynamic Group",
    "Oscorp Chemical Inc",
    "Wonka Confections",
    "Stark Industrial Supply",
];

const COURTS: [&str; 20] = [
    "United States District Court for the Southern District of New York",
    "United States District Court for the Northern District of California",
    "United States District Court for the District of Oregon",
    "United States District Court for the Eastern District of Texas",
    "United States District Court for the District of Columbia",
    "Superior Court of California",
    "Superior Court of New Jersey",
    "Supreme Court of New York",
    "Circuit Court of Cook County",
    "Circuit Court of Montgomery County",
    "District Court of Harris County",
    "Court of Common Pleas of Philadelphia County",
    "Chancery Court of Delaware",
    "Superior Court of Arizona",
    "Circuit Court of Miami-Dade County",
    "District Court of Clark County",
    "Superior Court of Fulton County",
    "Circuit Court of Jefferson County",
    "Court of Claims of Ohio",
    "Probate Court of Suffolk County",
];

const HONORIFICS: [&str; 4] = ["Judge", "Justice", "Magistrate Judge", "Chief Judge"];

const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

const CAPTION: &[&str] = &[
    "{PLA} , Plaintiff , versus {DEF} , Defendant , in the {COURT} .",
    "In the {COURT} , {PLA} , plaintiff , against {DEF} , defendant .",
    "Before the {COURT} : {PLA} , plaintiff , versus {DEF} , defendant , Case No. {CASENO} .",
    "{PLA} versus {DEF} , Case No. {CASENO} , filed in the {COURT} .",
    "Civil action brought by {PLA} against {DEF} in the {COURT} .",
];

const NEUTRAL: &[&str] = &[
    "A hearing was held on {DATE} .",
    "The parties appeared through counsel .",
    "The record was supplemented on {DATE} .",
    "Both parties submitted written briefs .",
];

const FACTS: &[&str] = &[
    "On {DATE} , {PLA} entered into a written agreement with {DEF} .",
    "{DEF} failed to deliver the goods by {DATE} .",
    "{PLA} paid {AMT} to {DEF} on {DATE} .",
    "The contract required {DEF} to pay {AMT} each month .",
    "{PLA} notified {DEF} of the breach on {DATE} .",
    "{DEF} did not respond to the letter sent by {PLA} .",
    "According to the complaint , {DEF} stopped making payments after {DATE} .",
    "{PLA} delivered the equipment to {DEF} on {DATE} and received no payment .",
];

const CLAIM: &[&str] = &[
    "{PLA} seeks damages of {AMT} from {DEF} .",
    "{PLA} alleges that {DEF} breached the agreement and demands {AMT} .",
    "{PLA} asks the court to order {DEF} to pay {AMT} plus interest .",
    "{PLA} claims that {DEF} owes {AMT} under the contract .",
    "The complaint filed by {PLA} demands {AMT} in compensatory damages from {DEF} .",
];

const RULING: &[&str] = &[
    "The {COURT} , {JUDGE} presiding , entered judgment for {PLA} in the amount of {AMT} on {DATE} .",
    "{JUDGE} ordered {DEF} to pay {AMT} to {PLA} .",
    "On {DATE} , {JUDGE} dismissed the claims against {DEF} .",
    "Judgment was entered against {DEF} by {JUDGE} on {DATE} .",
    "{JUDGE} granted summary judgment to {PLA} and awarded {AMT} .",
];

const OTHER: &[&str] = &[
    "Costs are reserved .",
    "This order was filed on {DATE} .",
    "Counsel for {DEF} may submit a response within thirty days .",
    "{PLA} is represented by counsel .",
    "Any appeal must be filed within thirty days .",
];

/// Fillers fixed for the whole document.
struct Cast {
    plaintiff: Vec<String>,
    defendant: Vec<String>,
    court: Vec<String>,
    judge: Vec<String>,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn person(rng: &mut Rng) -> Vec<String> {
    vec![
        rng.choose(&FIRST_NAMES).to_string(),
        rng.choose(&LAST_NAMES).to_string(),
    ]
}

fn date(rng: &mut Rng) -> Vec<String> {
    vec![
        rng.choose(&MONTHS).to_string(),
        rng.range_inclusive(1, 28).to_string(),
        ",".to_string(),
        rng.range_inclusive(2005, 2020).to_string(),
    ]
}

fn amount(rng: &mut Rng) -> Vec<String> {
    let thousands = rng.range_inclusive(1, 250);
    let hundreds = rng.range_inclusive(0, 9);
    let text = if thousands >= 100 || rng.below(2) == 0 {
        format!("{},{}00", thousands, hundreds)
    } else {
        format!("{},{:03}", thousands, hundreds * 100 + 50 * rng.below(2))
    };
    vec!["$".to_string(), text]
}

fn case_number(rng: &mut Rng) -> String {
    format!(
        "{:02}-{:04}",
        rng.range_inclusive(5, 20),
        rng.range_inclusive(100, 9999)
    )
}

impl Cast {
    fn draw(rng: &mut Rng) -> Self {
        let plaintiff = person(rng);
        let defendant = if rng.below(10) < 3 {
            words(rng.choose(&COMPANIES))
        } else {
            let mut d = person(rng);
            while d == plaintiff {
                d = person(rng);
            }
            d
        };
        let court = words(rng.choose(&COURTS));
        let mut judge = words(rng.choose(&HONORIFICS));
        judge.extend(person(rng));
        Self {
            plaintiff,
            defendant,
            court,
            judge,
        }
    }
}

fn realize(template: &str, class: &str, cast: &Cast, rng: &mut Rng) -> Sentence {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for word in template.split_whitespace() {
        let (filler, label) = match word {
            "{PLA}" => (cast.plaintiff.clone(), Some("PLA")),
            "{DEF}" => (cast.defendant.clone(), Some("DEF")),
            "{COURT}" => (cast.court.clone(), Some("COURT")),
            "{JUDGE}" => (cast.judge.clone(), Some("JUDGE")),
            "{DATE}" => (date(rng), Some("DATE")),
            "{AMT}" => (amount(rng), Some("AMT")),
            "{CASENO}" => (vec![case_number(rng)], None),
            w => (tokenize(w), None),
        };
        if let Some(label) = label {
            spans.push(TagSpan::new(
                tokens.len(),
                tokens.len() + filler.len(),
                label,
            ));
        }
        tokens.extend(filler);
    }
    let tags = bio_encode(&spans, tokens.len()).expect("template spans are disjoint");
    Sentence {
        tokens,
        tags,
        class: class.to_string(),
    }
}

fn pick<'a>(pool: &[&'a str], shared: &[&'a str], rng: &mut Rng) -> &'a str {
    let i = rng.below(pool.len() + shared.len());
    if i < pool.len() {
        pool[i]
    } else {
        shared[i - pool.len()]
    }
}

/// `n_docs` documents with ids `doc-000000`, `doc-000001`, ...
pub fn generate_corpus(n_docs: usize, seed: u64) -> Vec<Document> {
    let mut rng = Rng::new(seed);
    (0..n_docs)
        .map(|i| {
            let cast = Cast::draw(&mut rng);
            let mut sentences = Vec::new();
            sentences.push(realize(rng.choose(CAPTION), "CAPTION", &cast, &mut rng));
            for _ in 0..rng.range_inclusive(1, 4) {
                let t = pick(FACTS, NEUTRAL, &mut rng);
                sentences.push(realize(t, "FACTS", &cast, &mut rng));
            }
            sentences.push(realize(rng.choose(CLAIM), "CLAIM", &cast, &mut rng));
            sentences.push(realize(rng.choose(RULING), "RULING", &cast, &mut rng));
            for _ in 0..rng.range_inclusive(0, 2) {
                let t = pick(OTHER, NEUTRAL, &mut rng);
                sentences.push(realize(t, "OTHER", &cast, &mut rng));
            }
            Document {
                id: format!("doc-{i:06}"),
                sentences,
            }
        })
        .collect()
}

/// Space-joined surface text of a document, which `split_sentences` and
/// `tokenize` map back to the same sentences and tokens.
pub fn document_text(doc: &Document) -> String {
    doc.sentences
        .iter()
        .map(|s| s.tokens.join(" "))
        .collect::<Vec<_>>()
        .join(" ")
}
