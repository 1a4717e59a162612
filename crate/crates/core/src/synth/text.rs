//! Templated English for generated traces. Every clean instruction must
//! classify inside its worker's capabilities under the default table.

pub const DEFAULT_QUERY: &str =
    "According to the US Bureau of Reclamation glossary, what does the \
acronym that shares its name with a book of the New Testament stand for";

pub const ORCHESTRATOR: &str = "Orchestrator";

pub struct WorkerText {
    pub name: &'static str,
    pub descriptions: &'static [&'static str],
    pub instructions: &'static [&'static str],
}

pub const WORKERS: [WorkerText; 4] = [
    WorkerText {
        name: "WebSurfer",
        descriptions: &[
            "Search the web for the US Bureau of Reclamation glossary",
            "Locate the acronym entries on the glossary page",
            "Read the glossary entries for each candidate acronym",
        ],
        instructions: &[
            "Search Bing for the Bureau of Reclamation glossary",
            "Navigate to the glossary URL and wait for it to load",
            "Click the link to the acronym list",
            "Scroll down to the entries starting with the letter S",
            "Read the definition shown on the page",
        ],
    },
    WorkerText {
        name: "FileSurfer",
        descriptions: &[
            "Open the downloaded glossary file and inspect its sections",
            "List the files saved in the working directory",
        ],
        instructions: &[
            "Open the downloaded glossary PDF",
            "Read the section covering acronyms",
            "List the contents of the downloads folder",
        ],
    },
    WorkerText {
        name: "Coder",
        descriptions: &[
            "Write a script that cross-references acronyms with New Testament books",
            "Prepare code that normalizes the glossary entries",
        ],
        instructions: &[
            "Write a Python function that compares the acronyms with the New Testament books",
            "Implement code to normalize the glossary entries",
        ],
    },
    WorkerText {
        name: "Executor",
        descriptions: &[
            "Run the comparison script and collect its output",
            "Execute the normalization program on the saved entries",
        ],
        instructions: &[
            "Run the script and print the matching acronym",
            "Execute the saved program and capture its output",
        ],
    },
];

/// Sent to a WebSurfer; classifies as `run_code`.
pub const FOREIGN_INSTRUCTION: &str = "Execute the shell command and report its exit status";
pub const FOREIGN_WORKER: &str = "WebSurfer";

pub const SUCCESS_RESULTS: &[&str] = &[
    "The step finished successfully. Relevant details were recorded for the next step.",
    "Found the glossary page at https://www.usbr.gov/library/glossary/ and saved the relevant entries.",
    "Retrieved the requested content. The acronym list is now available.",
    "Completed the request without errors. See https://www.usbr.gov/main/ for the source.",
];

pub const NO_PROGRESS_RESULTS: &[&str] = &[
    "The attempt returned the same content as before. No new information about the acronym was found.",
    "Nothing new was found on this attempt. The page content was unchanged.",
];

pub const FAILURE_RESULT: &str = "Error: the request timed out before the document could be \
retrieved. The worker gave up after three retries.";

/// `{}` is replaced by the 1-based plan number, which keeps clean reasons distinct.
pub const FAILURE_REASONS: &[&str] = &[
    "Plan {} stalled because the glossary site kept returning an access error.",
    "Plan {} stalled because the downloaded file did not contain the acronym list.",
    "Plan {} stalled because the search results never reached the glossary.",
];

pub const UPDATES: &[&str] = &[
    "The next plan switches to the archived copy of the glossary (revision {}).",
    "The next plan reads the local copy of the file instead (revision {}).",
    "The next plan asks the Coder to parse the entries directly (revision {}).",
];

pub const REPEATED_REASON: &str = "The glossary site kept blocking automated access.";

pub const FINAL_ANSWER: &str =
    "The matching glossary acronym was found and its expansion reported.";

pub fn marker(n: usize) -> String {
    format!("[[marker-{n}]]")
}
