//! Event data model, CSV ingestion, rescaling and chronological splitting.
//!
//! Event types are 1-based in files and reports and 0-based everywhere in
//! memory; the conversion happens in [`parse_events`] and [`to_csv`] only.

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x_lo, x_hi] x [y_lo, y_hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Rect {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        let finite = [x_lo, x_hi, y_lo, y_hi].iter().all(|v| v.is_finite());
        if !finite || x_lo >= x_hi || y_lo >= y_hi {
            return Err(Error::Config(format!(
                "invalid rectangle [{x_lo}, {x_hi}] x [{y_lo}, {y_hi}]"
            )));
        }
        Ok(Self {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
        })
    }

    /// The square `[-h, h]^2`.
    pub fn symmetric(h: f64) -> Self {
        Self {
            x_lo: -h,
            x_hi: h,
            y_lo: -h,
            y_hi: h,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_hi - self.x_lo
    }

    pub fn height(&self) -> f64 {
        self.y_hi - self.y_lo
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x_lo + self.x_hi), 0.5 * (self.y_lo + self.y_hi)]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_lo && p[0] <= self.x_hi && p[1] >= self.y_lo && p[1] <= self.y_hi
    }

    /// `n` points per axis, boundaries included, in row-major order (y outer, x inner).
    pub fn grid(&self, n: usize) -> Vec<[f64; 2]> {
        let n = n.max(2);
        let step_x = self.width() / (n - 1) as f64;
        let step_y = self.height() / (n - 1) as f64;
        let mut out = Vec::with_capacity(n * n);
        for iy in 0..n {
            let y = self.y_lo + iy as f64 * step_y;
            for ix in 0..n {
                out.push([self.x_lo + ix as f64 * step_x, y]);
            }
        }
        out
    }
}

/// One observed event. `kind` is the 0-based event type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: usize,
    pub time: f64,
    pub location: [f64; 2],
}

impl EventRecord {
    pub fn new(kind: usize, time: f64, location: [f64; 2]) -> Self {
        Self {
            kind,
            time,
            location,
        }
    }

    /// 1-based type id as it appears in files.
    pub fn type_id(&self) -> usize {
        self.kind + 1
    }
}

/// Time-ordered events observed on the window `[start, end]` over a rectangle.
///
/// A whole data set has `start = 0` and `end = T`. Partitions produced by
/// [`split_chronological`] keep absolute times and carry their own window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    events: Vec<EventRecord>,
    num_types: usize,
    start: f64,
    end: f64,
    domain: Rect,
}

impl EventSequence {
    /// Builds a sequence on `[start, end]`. Events are stably sorted by time.
    pub fn new(
        mut events: Vec<EventRecord>,
        num_types: usize,
        domain: Rect,
        start: f64,
        end: f64,
    ) -> Result<Self> {
        if num_types == 0 {
            return Err(Error::Config("num_types must be at least 1".into()));
        }
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || end < start {
            return Err(Error::Domain(format!(
                "invalid time window [{start}, {end}]"
            )));
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        for (i, e) in events.iter().enumerate() {
            if e.kind >= num_types {
                return Err(Error::Domain(format!(
                    "event {} has type {} outside 1..={num_types}",
                    i + 1,
                    e.type_id()
                )));
            }
            if !e.time.is_finite() || e.time < start || e.time > end {
                return Err(Error::Domain(format!(
                    "event {} at time {} lies outside [{start}, {end}]",
                    i + 1,
                    e.time
                )));
            }
            if !domain.contains(e.location) {
                return Err(Error::Domain(format!(
                    "event {} at ({}, {}) lies outside the spatial domain",
                    i + 1,
                    e.location[0],
                    e.location[1]
                )));
            }
        }
        Ok(Self {
            events,
            num_types,
            start,
            end,
            domain,
        })
    }

    /// Sequence on `[0, T]` where `T` defaults to the last event time.
    pub fn from_events(
        events: Vec<EventRecord>,
        num_types: usize,
        domain: Rect,
        duration: Option<f64>,
    ) -> Result<Self> {
        let last = events.iter().map(|e| e.time).fold(0.0, f64::max);
        Self::new(events, num_types, domain, 0.0, duration.unwrap_or(last))
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    /// Events with `time < t`.
    pub fn prefix_before(&self, t: f64) -> &[EventRecord] {
        let n = self.events.partition_point(|e| e.time < t);
        &self.events[..n]
    }

    pub fn type_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_types];
        for e in &self.events {
            counts[e.kind] += 1;
        }
        counts
    }

    /// Same events on a different window end.
    pub fn with_end(&self, end: f64) -> Result<Self> {
        Self::new(
            self.events.clone(),
            self.num_types,
            self.domain,
            self.start,
            end,
        )
    }

    /// Concatenates chronologically adjacent parts into one sequence spanning all of them.
    pub fn concat(parts: &[&EventSequence]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat needs at least one part".into()))?;
        let mut events = Vec::new();
        for (k, p) in parts.iter().enumerate() {
            if p.num_types != first.num_types || p.domain != first.domain {
                return Err(Error::Contract(
                    "concat parts disagree on types or domain".into(),
                ));
            }
            if k > 0 && p.start < parts[k - 1].end {
                return Err(Error::Contract("concat parts are not chronological".into()));
            }
            events.extend_from_slice(&p.events);
        }
        let end = parts.last().map(|p| p.end).unwrap_or(first.end);
        Self::new(events, first.num_types, first.domain, first.start, end)
    }
}

/// Parses `u,t,x,y` CSV text. Type ids in the file are 1-based.
pub fn parse_events(
    csv_text: &str,
    num_types: usize,
    domain: Rect,
    duration: Option<f64>,
) -> Result<EventSequence> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names != ["u", "t", "x", "y"] {
        return Err(Error::Parse {
            row: 0,
            msg: format!("expected header `u,t,x,y`, found `{}`", names.join(",")),
        });
    }

    let mut events = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if record.len() != 4 {
            return Err(Error::Parse {
                row,
                msg: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let bad = |what: &str, v: &str| Error::Parse {
            row,
            msg: format!("cannot parse {what} from `{v}`"),
        };
        let u: i64 = record[0].parse().map_err(|_| bad("type id", &record[0]))?;
        let t: f64 = record[1].parse().map_err(|_| bad("time", &record[1]))?;
        let x: f64 = record[2].parse().map_err(|_| bad("x", &record[2]))?;
        let y: f64 = record[3].parse().map_err(|_| bad("y", &record[3]))?;
        if u < 1 || u as usize > num_types {
            return Err(Error::Domain(format!(
                "row {row}: type id {u} outside 1..={num_types}"
            )));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!("row {row}: invalid time {t}")));
        }
        if !domain.contains([x, y]) {
            return Err(Error::Domain(format!(
                "row {row}: location ({x}, {y}) outside the spatial domain"
            )));
        }
        events.push(EventRecord::new(u as usize - 1, t, [x, y]));
    }
    EventSequence::from_events(events, num_types, domain, duration)
}

/// Writes `u,t,x,y` CSV. Floats use the shortest representation that parses
/// back to the identical value.
pub fn to_csv(seq: &EventSequence) -> String {
    let mut out = String::from("u,t,x,y\n");
    for e in seq.events() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.type_id(),
            e.time,
            e.location[0],
            e.location[1]
        ));
    }
    out
}

/// Affine map of the spatial domain onto the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialNormalization {
    pub x_offset: f64,
    pub y_offset: f64,
    pub x_span: f64,
    pub y_span: f64,
}

impl SpatialNormalization {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [
            (p[0] - self.x_offset) / self.x_span,
            (p[1] - self.y_offset) / self.y_span,
        ]
    }

    pub fn invert(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] * self.x_span + self.x_offset,
            p[1] * self.y_span + self.y_offset,
        ]
    }
}

/// Record of the preprocessing applied to raw data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    /// Multiplier applied to raw times.
    pub time_scale: f64,
    pub spatial: Option<SpatialNormalization>,
}

impl Default for ScalingInfo {
    fn default() -> Self {
        Self {
            time_scale: 1.0,
            spatial: None,
        }
    }
}

impl ScalingInfo {
    pub fn invert_time(&self, t: f64) -> f64 {
        t / self.time_scale
    }

    /// Re-applies the recorded transforms to a raw sequence.
    pub fn apply(&self, seq: &EventSequence) -> Result<EventSequence> {
        let scaled = scale_time(seq, self.time_scale)?;
        match &self.spatial {
            Some(n) => apply_spatial(&scaled, n),
            None => Ok(scaled),
        }
    }
}

fn scale_time(seq: &EventSequence, scale: f64) -> Result<EventSequence> {
    let events = seq
        .events()
        .iter()
        .map(|e| EventRecord::new(e.kind, e.time * scale, e.location))
        .collect();
    EventSequence::new(
        events,
        seq.num_types(),
        seq.domain(),
        seq.start() * scale,
        seq.end() * scale,
    )
}

/// Rescales time so the mean gap between consecutive events is exactly one.
///
/// Sequences with fewer than two events (or zero spread) come back unchanged
/// with scale 1.
pub fn rescale_time(seq: &EventSequence) -> Result<(EventSequence, ScalingInfo)> {
    let n = seq.len();
    if n < 2 {
        return Ok((seq.clone(), ScalingInfo::default()));
    }
    let ev = seq.events();
    let mean_gap = (ev[n - 1].time - ev[0].time) / (n - 1) as f64;
    if !(mean_gap > 0.0) {
        return Ok((seq.clone(), ScalingInfo::default()));
    }
    let scale = 1.0 / mean_gap;
    let info = ScalingInfo {
        time_scale: scale,
        spatial: None,
    };
    Ok((scale_time(seq, scale)?, info))
}

fn apply_spatial(seq: &EventSequence, norm: &SpatialNormalization) -> Result<EventSequence> {
    let events = seq
        .events()
        .iter()
        .map(|e| {
            let mut p = norm.apply(e.location);
            // round-off can push boundary points a hair outside [0, 1]
            p[0] = p[0].clamp(0.0, 1.0);
            p[1] = p[1].clamp(0.0, 1.0);
            EventRecord::new(e.kind, e.time, p)
        })
        .collect();
    EventSequence::new(
        events,
        seq.num_types(),
        Rect::new(0.0, 1.0, 0.0, 1.0)?,
        seq.start(),
        seq.end(),
    )
}

/// Maps the spatial domain affinely onto the unit square.
pub fn normalize_space(seq: &EventSequence) -> Result<(EventSequence, SpatialNormalization)> {
    let d = seq.domain();
    let norm = SpatialNormalization {
        x_offset: d.x_lo,
        y_offset: d.y_lo,
        x_span: d.width(),
        y_span: d.height(),
    };
    Ok((apply_spatial(seq, &norm)?, norm))
}

/// Fractions for the chronological fit / validation / test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fit_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            fit_fraction: 0.72,
            val_fraction: 0.08,
            test_fraction: 0.20,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let f = [self.fit_fraction, self.val_fraction, self.test_fraction];
        if f.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config(format!(
                "split fractions must be positive: {f:?}"
            )));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1: {f:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub fit: EventSequence,
    pub val: EventSequence,
    pub test: EventSequence,
}

fn floor_count(n: usize, fraction: f64) -> usize {
    // tolerate products like 0.29 * 100 = 28.999999999999996
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// Contiguous fit -> val -> test partition. Validation and test sizes are
/// `floor(N * fraction)`; the remainder goes to the fit part.
///
/// Each part's window runs from the previous part's boundary to its own last
/// event, so the three windows tile `[seq.start, seq.end]`.
pub fn split_chronological(seq: &EventSequence, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if seq.is_empty() {
        return Err(Error::Contract("cannot split an empty sequence".into()));
    }
    let n = seq.len();
    let n_val = floor_count(n, spec.val_fraction);
    let n_test = floor_count(n, spec.test_fraction);
    let n_fit = n - n_val - n_test;
    if n_val == 0 {
        warn!("validation partition is empty for N={n}");
    }
    if n_test == 0 {
        warn!("test partition is empty for N={n}");
    }
    let ev = seq.events();
    let fit_end = if n_val + n_test > 0 {
        ev[n_fit - 1].time
    } else {
        seq.end()
    };
    let val_end = if n_test > 0 {
        if n_val > 0 {
            ev[n_fit + n_val - 1].time
        } else {
            fit_end
        }
    } else {
        seq.end()
    };
    let part = |range: std::ops::Range<usize>, a: f64, b: f64| {
        EventSequence::new(ev[range].to_vec(), seq.num_types(), seq.domain(), a, b)
    };
    Ok(Split {
        fit: part(0..n_fit, seq.start(), fit_end)?,
        val: part(n_fit..n_fit + n_val, fit_end, val_end)?,
        test: part(n_fit + n_val..n, val_end, seq.end())?,
    })
}

/// `N x U` indicator matrix of event types.
pub fn one_hot(seq: &EventSequence) -> Array2<f64> {
    let mut y = Array2::zeros((seq.len(), seq.num_types()));
    for (i, e) in seq.events().iter().enumerate() {
        y[[i, e.kind]] = 1.0;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Rect {
        Rect::symmetric(1.0)
    }

    fn seq_with_times(times: &[f64]) -> EventSequence {
        let ev = times
            .iter()
            .map(|&t| EventRecord::new(0, t, [0.0, 0.0]))
            .collect();
        EventSequence::from_events(ev, 1, square(), None).unwrap()
    }

    #[test]
    fn parses_single_row() {
        let s = parse_events("u,t,x,y\n1,0.5,0.1,-0.2", 1, square(), None).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.duration(), 0.5);
        assert_eq!(s.events()[0], EventRecord::new(0, 0.5, [0.1, -0.2]));
    }

    #[test]
    fn sorts_by_time() {
        let s = parse_events(
            "u,t,x,y\n1,3.0,0,0\n1,1.0,0,0\n1,2.0,0,0\n",
            1,
            square(),
            None,
        )
        .unwrap();
        let t: Vec<f64> = s.events().iter().map(|e| e.time).collect();
        assert_eq!(t, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn ties_keep_input_order() {
        let s = parse_events("u,t,x,y\n2,1.0,0.5,0\n1,1.0,-0.5,0\n", 2, square(), None).unwrap();
        assert_eq!(s.events()[0].kind, 1);
        assert_eq!(s.events()[1].kind, 0);
    }

    #[test]
    fn type_out_of_range_cites_row() {
        let err = parse_events("u,t,x,y\n3,0.1,0,0", 2, square(), None).unwrap_err();
        match err {
            Error::Domain(msg) => assert!(msg.contains("row 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let err = parse_events("u,t,x,y\n1,0.1,0,0\n1,abc,0,0\n", 1, square(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err:?}");
    }

    #[test]
    fn location_outside_domain_is_rejected() {
        let err = parse_events("u,t,x,y\n1,0.1,2.0,0\n", 1, square(), None).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("row 1")));
    }

    #[test]
    fn bad_header_is_rejected() {
        assert!(parse_events("a,b,c,d\n1,0,0,0\n", 1, square(), None).is_err());
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let ev = vec![
            EventRecord::new(0, 0.1 + 0.2, [1.0 / 3.0, -0.7]),
            EventRecord::new(1, std::f64::consts::PI, [1e-300, 0.999_999_999_999_999_9]),
        ];
        let s = EventSequence::from_events(ev, 2, square(), Some(10.0)).unwrap();
        let back = parse_events(&to_csv(&s), 2, square(), Some(10.0)).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rescale_examples() {
        let (s, info) = rescale_time(&seq_with_times(&[0.0, 2.0, 4.0, 6.0])).unwrap();
        let t: Vec<f64> = s.events().iter().map(|e| e.time).collect();
        assert_eq!(t, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(info.time_scale, 0.5);
        assert_eq!(s.duration(), 3.0);

        let unit = seq_with_times(&[0.0, 1.0, 2.0]);
        let (s, info) = rescale_time(&unit).unwrap();
        assert_eq!(info.time_scale, 1.0);
        assert_eq!(s, unit);

        let single = seq_with_times(&[7.0]);
        let (s, info) = rescale_time(&single).unwrap();
        assert_eq!(info.time_scale, 1.0);
        assert_eq!(s, single);
    }

    #[test]
    fn split_counts() {
        let times: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let sp = split_chronological(&seq_with_times(&times), &SplitSpec::default()).unwrap();
        assert_eq!((sp.fit.len(), sp.val.len(), sp.test.len()), (72, 8, 20));

        let times: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let sp = split_chronological(&seq_with_times(&times), &SplitSpec::default()).unwrap();
        assert_eq!((sp.fit.len(), sp.val.len(), sp.test.len()), (8, 0, 2));
        let max_fit = sp
            .fit
            .events()
            .iter()
            .map(|e| e.time)
            .fold(f64::MIN, f64::max);
        let min_test = sp
            .test
            .events()
            .iter()
            .map(|e| e.time)
            .fold(f64::MAX, f64::min);
        assert!(max_fit <= min_test);
    }

    #[test]
    fn split_windows_tile_the_sequence() {
        let times: Vec<f64> = (1..=50).map(|i| i as f64 * 0.5).collect();
        let seq = seq_with_times(&times).with_end(30.0).unwrap();
        let sp = split_chronological(&seq, &SplitSpec::default()).unwrap();
        assert_eq!(sp.fit.start(), 0.0);
        assert_eq!(sp.fit.end(), sp.val.start());
        assert_eq!(sp.val.end(), sp.test.start());
        assert_eq!(sp.test.end(), 30.0);
    }

    #[test]
    fn split_rejects_bad_spec() {
        let s = seq_with_times(&[0.0, 1.0]);
        let bad = SplitSpec {
            fit_fraction: 0.5,
            val_fraction: 0.0,
            test_fraction: 0.5,
        };
        assert!(matches!(
            split_chronological(&s, &bad),
            Err(Error::Config(_))
        ));
        let bad = SplitSpec {
            fit_fraction: 0.5,
            val_fraction: 0.2,
            test_fraction: 0.2,
        };
        assert!(matches!(
            split_chronological(&s, &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn one_hot_rows_and_columns() {
        let ev = vec![
            EventRecord::new(0, 1.0, [0.0, 0.0]),
            EventRecord::new(1, 2.0, [0.0, 0.0]),
            EventRecord::new(0, 3.0, [0.0, 0.0]),
        ];
        let s = EventSequence::from_events(ev, 2, square(), None).unwrap();
        let y = one_hot(&s);
        assert_eq!(y, ndarray::array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        let col: Vec<f64> = y.sum_axis(ndarray::Axis(0)).to_vec();
        assert_eq!(col, vec![2.0, 1.0]);
    }

    #[test]
    fn spatial_normalization_maps_to_unit_square() {
        let d = Rect::new(26.0, 45.0, 36.0, 42.0).unwrap();
        let ev = vec![
            EventRecord::new(0, 1.0, [26.0, 42.0]),
            EventRecord::new(0, 2.0, [35.5, 39.0]),
        ];
        let s = EventSequence::from_events(ev, 1, d, None).unwrap();
        let (n, norm) = normalize_space(&s).unwrap();
        assert_eq!(n.events()[0].location, [0.0, 1.0]);
        assert_eq!(n.events()[1].location, [0.5, 0.5]);
        let back = norm.invert(n.events()[1].location);
        assert!((back[0] - 35.5).abs() < 1e-12 && (back[1] - 39.0).abs() < 1e-12);
    }
}
