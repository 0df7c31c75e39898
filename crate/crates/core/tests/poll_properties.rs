#[path = "support/poll_model.rs"]
mod poll_model;

#[test]
fn random_event_sequences_keep_poll_invariants() {
    let (trained, closed) = poll_model::check_random_sequences(48).unwrap();
    assert!(trained > 0 && closed > trained, "sequences too shallow: {trained} trained, {closed} closed");
}
