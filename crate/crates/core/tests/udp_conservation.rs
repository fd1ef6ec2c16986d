mod common;

use mmwave_sim::mac::LinkAdaptation;
use mmwave_sim::{simulate, ChannelModel, RunOptions};

/// Bits a slot carries at the capped spectral efficiency.
fn max_tb_bits(cfg: &mmwave_sim::ScenarioConfig) -> f64 {
    let data = (cfg.frame.symbols_per_slot - cfg.frame.control_symbols) as f64;
    cfg.rate_map.se_cap * cfg.bandwidth_hz * cfg.frame.symbol_s * data
}

#[test]
fn ideal_sizing_delivers_drops_or_buffers_every_byte() {
    for model in ChannelModel::ALL {
        let cfg = mmwave_sim::ScenarioConfig {
            link_adaptation: LinkAdaptation::Ideal,
            ..common::grid(5, 0.2, vec![1]).with_model(model)
        };
        let out = simulate(&cfg, 2, &RunOptions::default()).unwrap();
        assert_eq!(out.air_losses, 0);
        assert_eq!(
            out.offered_bytes,
            out.delivered_bytes + out.dropped_bytes + out.buffered_bytes,
            "{model}"
        );
        assert!(out.throughput_bps <= cfg.udp_rate_bps * (1.0 + 1e-9));
        assert!(out.delivered_bytes > 0);
    }
}

#[test]
fn conservation_counts_air_losses_under_reported_adaptation() {
    let zero_margin = mmwave_sim::ScenarioConfig {
        link_adaptation: LinkAdaptation::reported(0.0),
        ..common::grid(5, 0.2, vec![1]).with_model(ChannelModel::SimpleA)
    };
    let out = simulate(&zero_margin, 2, &RunOptions::default()).unwrap();
    assert!(out.air_losses > 0);

    for model in ChannelModel::ALL {
        let cfg = common::grid(5, 0.2, vec![1]).with_model(model);
        let out = simulate(&cfg, 2, &RunOptions::default()).unwrap();
        assert_eq!(
            out.offered_bytes,
            out.delivered_bytes + out.dropped_bytes + out.buffered_bytes + out.air_lost_bytes,
            "{model}"
        );
    }
    let out = simulate(&zero_margin, 2, &RunOptions::default()).unwrap();
    assert_eq!(
        out.offered_bytes,
        out.delivered_bytes + out.dropped_bytes + out.buffered_bytes + out.air_lost_bytes
    );
}

#[test]
fn delivery_stays_within_the_slot_budget() {
    let cfg = common::grid(10, 0.2, vec![1]).with_model(ChannelModel::SimpleB);
    let out = simulate(&cfg, 3, &RunOptions::default()).unwrap();
    let cap = max_tb_bits(&cfg);
    for (u, ue) in out.per_ue.iter().enumerate() {
        assert!(
            ue.delivered_bytes as f64 * 8.0 <= ue.scheduled_slots as f64 * cap,
            "ue {u}"
        );
    }
    let slots_per_bs = (cfg.duration_s / cfg.frame.slot_s).ceil();
    assert!(out.slots_scheduled as f64 <= 5.0 * slots_per_bs);
}

#[test]
fn light_load_delivers_nearly_everything() {
    let cfg = mmwave_sim::ScenarioConfig {
        udp_rate_bps: 20e6,
        ..common::grid(2, 0.5, vec![1]).with_model(ChannelModel::SimpleB)
    };
    let out = simulate(&cfg, 1, &RunOptions::default()).unwrap();
    assert_eq!(out.rlc_drops, 0);
    assert!(out.delivered_bytes as f64 >= 0.95 * out.offered_bytes as f64);
}
