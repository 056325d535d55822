use crate::error::{Error, Result};
use crate::model::{Stage, StageOutcome, Verdict, DETAIL_REPLACEMENT};

/// Linear stage routing. A clip advances to the next stage only on `pass`;
/// `split` forwards the replacement sub-clip instead of the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTable {
    order: Vec<Stage>,
}

impl RoutingTable {
    pub fn new(order: Vec<Stage>) -> Result<Self> {
        if order.is_empty() {
            return Err(Error::Config("routing needs at least one stage".into()));
        }
        for (i, s) in order.iter().enumerate() {
            if order[..i].contains(s) {
                return Err(Error::Config(format!("stage {s} routed twice")));
            }
        }
        Ok(Self { order })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.order
    }

    pub fn first(&self) -> Stage {
        self.order[0]
    }

    pub fn next(&self, stage: Stage) -> Option<Stage> {
        let i = self.order.iter().position(|s| *s == stage)?;
        self.order.get(i + 1).copied()
    }

    /// Tasks to publish after `stage` recorded `records` for one subject.
    /// An asset summary fans out to its clips unless the next stage also
    /// works per asset.
    pub fn forwards(&self, stage: Stage, records: &[StageOutcome]) -> Vec<(Stage, String)> {
        let Some(next) = self.next(stage) else {
            return Vec::new();
        };
        if let Some(summary) = records.iter().find(|r| r.is_asset_summary()) {
            if !summary.verdict.advances() {
                return Vec::new();
            }
            if next.is_asset_level() {
                return vec![(next, summary.clip_id.clone())];
            }
            return summary.summary_clips().into_iter().map(|c| (next, c)).collect();
        }
        records
            .iter()
            .filter_map(|r| match r.verdict {
                Verdict::Pass => Some((next, r.clip_id.clone())),
                Verdict::Split => r.detail.get(DETAIL_REPLACEMENT).map(|c| (next, c.clone())),
                Verdict::Fail => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DETAIL_CLIPS;

    #[test]
    fn default_order_walks_all_stages() {
        let r = RoutingTable::new(Stage::ALL.to_vec()).unwrap();
        assert_eq!(r.next(Stage::Ocr), Some(Stage::Motion));
        assert_eq!(r.next(Stage::Caption), None);
        assert!(RoutingTable::new(vec![Stage::Clip, Stage::Clip]).is_err());
    }

    #[test]
    fn only_pass_and_split_advance() {
        let r = RoutingTable::new(Stage::ALL.to_vec()).unwrap();
        let pass = StageOutcome::new("a:0-30", Stage::Ocr, Verdict::Pass);
        let fail = StageOutcome::new("a:30-60", Stage::Ocr, Verdict::Fail);
        assert_eq!(r.forwards(Stage::Ocr, &[pass, fail]), vec![(Stage::Motion, "a:0-30".to_string())]);
        let split = StageOutcome::new("a:0-100", Stage::Motion, Verdict::Split)
            .with_detail(DETAIL_REPLACEMENT, "a:41-100");
        assert_eq!(
            r.forwards(Stage::Motion, &[split]),
            vec![(Stage::Caption, "a:41-100".to_string())]
        );
    }

    #[test]
    fn summary_fans_out_or_forwards_asset() {
        let summary = StageOutcome::new("a", Stage::Clip, Verdict::Pass).with_detail(DETAIL_CLIPS, "a:0-30,a:30-60");
        let with_dedup = RoutingTable::new(Stage::ALL.to_vec()).unwrap();
        assert_eq!(with_dedup.forwards(Stage::Clip, std::slice::from_ref(&summary)), vec![(Stage::Dedup, "a".to_string())]);
        let no_dedup = RoutingTable::new(vec![Stage::Clip, Stage::Ocr, Stage::Caption]).unwrap();
        assert_eq!(
            no_dedup.forwards(Stage::Clip, &[summary]),
            vec![(Stage::Ocr, "a:0-30".to_string()), (Stage::Ocr, "a:30-60".to_string())]
        );
        let empty = StageOutcome::new("b", Stage::Clip, Verdict::Fail).with_detail(DETAIL_CLIPS, "");
        assert!(with_dedup.forwards(Stage::Clip, &[empty]).is_empty());
    }
}
