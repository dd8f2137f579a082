#![allow(dead_code)]

use chrono::NaiveDate;
use phishpanel::panel::ExposureRecord;
use phishpanel::similarity::{published_codes, PUBLISHED_CAMPAIGN_DATES};

pub const PUBLISHED_EXPOSURES: usize = 192_840;
pub const PUBLISHED_EMPLOYEES: usize = 19_341;
pub const PUBLISHED_TRANSITIONS: usize = 173_499;
pub const PUBLISHED_BUFFER_ROWS: usize = 6_344;
pub const PUBLISHED_ENGAGEMENT_SAMPLE: usize = 167_155;

pub fn exposure(emp: &str, campaign: u32, clicked: bool, reported: bool, seconds: Option<f64>) -> ExposureRecord {
    let c = campaign as usize - 1;
    ExposureRecord {
        employee_id: emp.to_string(),
        campaign_id: campaign,
        scenario_id: published_codes()[c % 17].scenario_id.clone(),
        sent_at: NaiveDate::parse_from_str(PUBLISHED_CAMPAIGN_DATES[c % 17], "%Y-%m-%d").unwrap()
            + chrono::Days::new(400 * (c / 17) as u64),
        clicked,
        reported,
        education_seconds: if clicked { seconds } else { None },
        role: ["faculty", "staff", "student_worker"][c % 3].to_string(),
        job_status: ["full_time", "part_time"][campaign as usize % 2].to_string(),
        org_unit: "org_a".to_string(),
        tenure_days: Some(365.0),
    }
}

/// Exposure counts per employee, each in 1..=17, summing to `total`.
pub fn exposure_counts(employees: usize, total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = (0..employees).map(|i| 1 + (i * 7) % 17).collect();
    let mut sum: usize = counts.iter().sum();
    let mut i = 0;
    while sum != total {
        let k = i % employees;
        if sum < total && counts[k] < 17 {
            counts[k] += 1;
            sum += 1;
        } else if sum > total && counts[k] > 1 {
            counts[k] -= 1;
            sum -= 1;
        }
        i += 1;
    }
    counts
}

const BUFFER_SECONDS: [Option<f64>; 7] =
    [Some(11.0), Some(15.0), Some(19.0), Some(291.0), Some(295.0), Some(299.0), None];
const RETAINED_SECONDS: [f64; 8] = [0.0, 4.0, 10.0, 20.0, 150.0, 290.0, 300.0, 301.0];

/// A panel with the published exposure and employee counts in which exactly
/// `buffer` transitions have a click at t with buffer-band or missing seconds.
/// Clicks on final exposures also carry buffer seconds; they never enter a
/// transition and must not be counted.
pub fn published_count_panel(buffer: usize) -> Vec<ExposureRecord> {
    let counts = exposure_counts(PUBLISHED_EMPLOYEES, PUBLISHED_EXPOSURES);
    let mut rows = Vec::with_capacity(PUBLISHED_EXPOSURES);
    let mut placed = 0;
    let mut g = 0usize;
    for (e, &n) in counts.iter().enumerate() {
        let id = format!("E{e:06}");
        for k in 0..n {
            g += 1;
            let last = k + 1 == n;
            let clicked = g % 4 == 0 || last && g % 3 == 0;
            let reported = g % 5 == 1;
            let seconds = if !clicked {
                None
            } else if last {
                BUFFER_SECONDS[g % BUFFER_SECONDS.len()]
            } else if placed < buffer {
                placed += 1;
                BUFFER_SECONDS[placed % BUFFER_SECONDS.len()]
            } else {
                Some(RETAINED_SECONDS[g % RETAINED_SECONDS.len()])
            };
            rows.push(exposure(&id, k as u32 + 1, clicked, reported, seconds));
        }
    }
    assert_eq!(placed, buffer, "not enough clicked transitions to place the buffer rows");
    rows
}
