use super::{FlowSpec, Mode, ServiceClass, VponClass, VponSpec};
use crate::error::{Error, Result};
use crate::ids::VponId;

/// Picks the VPON that carries `flow`.
///
/// An explicit per-flow VPON wins. Otherwise time-critical traffic goes to
/// the first low-latency VPON the ONU belongs to and best-effort traffic to
/// the first high-latency one. Baseline mode has a single VPON that carries
/// everything. `path` locates the flow in the scenario for error reports.
pub fn segmentation_policy(
    flow: &FlowSpec,
    vpons: &[VponSpec],
    mode: Mode,
    path: &str,
) -> Result<VponId> {
    let member = |v: &VponSpec| v.members.contains(&flow.onu_id);

    if let Some(id) = &flow.vpon {
        let Some(v) = vpons.iter().find(|v| &v.id == id) else {
            return Err(Error::config(
                format!("{path}/vpon"),
                format!("unknown VPON {id}"),
            ));
        };
        if !member(v) {
            return Err(Error::config(
                format!("{path}/vpon"),
                format!("ONU {} is not a member of {id}", flow.onu_id),
            ));
        }
        return Ok(id.clone());
    }

    if mode == Mode::Baseline {
        if let [only] = vpons {
            if member(only) {
                return Ok(only.id.clone());
            }
        }
    } else {
        let wanted = match flow.class {
            ServiceClass::TimeCritical => VponClass::LowLatency,
            ServiceClass::BestEffort => VponClass::HighLatency,
        };
        if let Some(v) = vpons.iter().find(|v| v.class == wanted && member(v)) {
            return Ok(v.id.clone());
        }
    }
    Err(Error::config(
        path.to_string(),
        format!(
            "ONU {} is not a member of any VPON able to carry {} traffic",
            flow.onu_id,
            flow.class.as_str()
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dba::DbaConfig;
    use crate::ids::{FlowId, OnuId};
    use crate::sim::{ArrivalProcess, FlowDirection, SizeModel};

    fn vpon(id: &str, class: VponClass, members: &[u32]) -> VponSpec {
        VponSpec {
            id: VponId::new(id),
            class,
            members: members.iter().map(|&m| OnuId(m)).collect(),
            dba: DbaConfig::default(),
        }
    }

    fn flow(onu: u32, class: ServiceClass) -> FlowSpec {
        FlowSpec {
            flow_id: FlowId(1),
            onu_id: OnuId(onu),
            class,
            arrival: ArrivalProcess::Poisson { rate_pps: 1.0 },
            size: SizeModel::Fixed(64),
            direction: FlowDirection::Upstream,
            vpon: None,
            start_ns: 0,
            stop_ns: None,
        }
    }

    fn pair() -> Vec<VponSpec> {
        vec![
            vpon("llv", VponClass::LowLatency, &[1, 2]),
            vpon("hlv", VponClass::HighLatency, &[1, 2, 3]),
        ]
    }

    #[test]
    fn class_based_mapping() {
        let v = pair();
        let tc = segmentation_policy(
            &flow(1, ServiceClass::TimeCritical),
            &v,
            Mode::Virtual,
            "/flows/0",
        );
        assert_eq!(tc.unwrap(), VponId::new("llv"));
        let be = segmentation_policy(
            &flow(1, ServiceClass::BestEffort),
            &v,
            Mode::Virtual,
            "/flows/0",
        );
        assert_eq!(be.unwrap(), VponId::new("hlv"));
    }

    #[test]
    fn baseline_takes_the_only_vpon() {
        let v = vec![vpon("pon", VponClass::HighLatency, &[1])];
        for class in [ServiceClass::TimeCritical, ServiceClass::BestEffort] {
            let r = segmentation_policy(&flow(1, class), &v, Mode::Baseline, "/flows/0");
            assert_eq!(r.unwrap(), VponId::new("pon"));
        }
    }

    #[test]
    fn override_wins_and_is_checked() {
        let v = pair();
        let mut f = flow(1, ServiceClass::TimeCritical);
        f.vpon = Some(VponId::new("hlv"));
        assert_eq!(
            segmentation_policy(&f, &v, Mode::Virtual, "/flows/2").unwrap(),
            VponId::new("hlv")
        );
        f.onu_id = OnuId(9);
        match segmentation_policy(&f, &v, Mode::Virtual, "/flows/2") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/flows/2/vpon"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_member_is_config_error() {
        let v = pair();
        let r = segmentation_policy(
            &flow(3, ServiceClass::TimeCritical),
            &v,
            Mode::Virtual,
            "/flows/4",
        );
        match r {
            Err(Error::Config { path, .. }) => assert_eq!(path, "/flows/4"),
            other => panic!("{other:?}"),
        }
    }
}
