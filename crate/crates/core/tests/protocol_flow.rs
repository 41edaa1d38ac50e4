use qshuffle::dp::RandomizerConfig;
use qshuffle::protocol::{run_protocol, run_protocol_with_rng, Backend, MessageKind, ProtocolConfig, ProtocolTranscript};
use qshuffle::rng::rng_for_run;

#[test]
fn every_backend_recovers_the_noiseless_sum() {
    let rc = RandomizerConfig::from_gamma(3, 0.0).unwrap();
    let xs = [2, 0, 1, 2];
    for backend in Backend::ALL {
        let cfg = ProtocolConfig::new(4, 11, rc, backend, 3).unwrap();
        for t in 0..20 {
            let tr = run_protocol_with_rng(&cfg, &xs, &mut rng_for_run(3, t)).unwrap();
            tr.check_invariants().unwrap();
            assert_eq!(tr.z, 5, "{backend}");
            assert_eq!(tr.estimate, Some(5.0));
        }
    }
}

#[test]
fn statevector_transcript_logs_corrections_then_reports() {
    let rc = RandomizerConfig::from_epsilon(2, 1.0).unwrap();
    let cfg = ProtocolConfig::new(3, 5, rc, Backend::StateVector, 9).unwrap();
    let tr = run_protocol(&cfg, &[1, 1, 0]).unwrap();
    let kinds: Vec<MessageKind> = tr.messages.iter().map(|m| m.kind).collect();
    assert_eq!(kinds[..3], [MessageKind::TeleportCorrection; 3]);
    assert_eq!(kinds[3..], [MessageKind::MeasurementReport; 3]);
    assert!(tr.clients.iter().all(|c| c.correction.is_some()));

    let text = serde_json::to_string(&tr).unwrap();
    let back: ProtocolTranscript = serde_json::from_str(&text).unwrap();
    assert_eq!(back, tr);
    assert_eq!(run_protocol(&cfg, &[1, 1, 0]).unwrap(), tr);
}
