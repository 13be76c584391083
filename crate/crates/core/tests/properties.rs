use std::collections::BTreeMap;

use proptest::prelude::*;

use rcl::adversary::StrategyKind;
use rcl::block::{Block, Commitment};
use rcl::chain::{validate_chain, Chain, ValidationCtx};
use rcl::hash::{Digest, Oracle};
use rcl::scenario::{run_seed, simulate};
use rcl::sig::{SigRegistry, Signature, SigningKey};
use rcl::tx::{Ledger, ProcessId, Transaction, TxKind};
use rcl::{run_scenario, AllocatorKind, ScenarioConfig};

fn pid() -> impl Strategy<Value = ProcessId> {
    (0u32..6).prop_map(ProcessId)
}

fn arb_kind() -> impl Strategy<Value = TxKind> {
    prop_oneof![
        (pid(), 0u64..40).prop_map(|(to, amount)| TxKind::Transfer { to, amount }),
        (0u64..40).prop_map(|amount| TxKind::Pledge { amount }),
        (0u64..40).prop_map(|amount| TxKind::Release { amount }),
        prop::collection::vec(any::<u8>(), 0..16).prop_map(TxKind::Payload),
    ]
}

fn arb_tx() -> impl Strategy<Value = Transaction> {
    (pid(), 0u64..8, arb_kind()).prop_map(|(sender, nonce, kind)| Transaction { sender, nonce, kind })
}

fn arb_commitment() -> impl Strategy<Value = Commitment> {
    prop_oneof![
        any::<u64>().prop_map(Commitment::PowNonce),
        (pid(), any::<u64>(), any::<u64>()).prop_map(|(process, rho, slot)| Commitment::Ticket { process, rho, slot }),
    ]
}

fn arb_block() -> impl Strategy<Value = Block> {
    (
        prop::option::of(any::<u64>().prop_map(Digest)),
        prop::collection::vec(arb_tx(), 0..6),
        prop::option::of(arb_commitment()),
        prop::option::of((pid(), any::<u64>()).prop_map(|(signer, d)| Signature { signer, message_digest: Digest(d) })),
        prop::option::of(pid()),
        any::<u64>(),
    )
        .prop_map(|(parent, txs, proof, signature, producer, slot)| Block { parent, txs, proof, signature, producer, slot })
}

/// Reference ledger written independently of the crate: balances and
/// nonces in plain maps, with the transition rules spelled out directly.
#[derive(Default)]
struct Model {
    liquid: BTreeMap<ProcessId, u64>,
    pledged: BTreeMap<ProcessId, u64>,
    nonce: BTreeMap<ProcessId, u64>,
}

impl Model {
    fn get(m: &BTreeMap<ProcessId, u64>, p: ProcessId) -> u64 {
        m.get(&p).copied().unwrap_or(0)
    }

    fn apply(&mut self, tx: &Transaction) -> bool {
        let s = tx.sender;
        if tx.nonce != Self::get(&self.nonce, s) + 1 {
            return false;
        }
        let (liq, pl) = (Self::get(&self.liquid, s), Self::get(&self.pledged, s));
        match tx.kind {
            TxKind::Transfer { to, amount } => {
                if amount > liq {
                    return false;
                }
                self.liquid.insert(s, liq - amount);
                let dst = Self::get(&self.liquid, to);
                self.liquid.insert(to, dst + amount);
            }
            TxKind::Pledge { amount } => {
                if amount > liq {
                    return false;
                }
                self.liquid.insert(s, liq - amount);
                self.pledged.insert(s, pl + amount);
            }
            TxKind::Release { amount } => {
                if amount > pl {
                    return false;
                }
                self.pledged.insert(s, pl - amount);
                self.liquid.insert(s, liq + amount);
            }
            TxKind::Payload(_) => {}
        }
        self.nonce.insert(s, tx.nonce);
        true
    }
}

/// A signed chain of `n` empty-proof blocks on a fresh genesis.
fn signed_chain(n: usize, payloads: &[u8]) -> (Oracle, SigRegistry, Chain) {
    let oracle = Oracle::new(31);
    let mut sigs = SigRegistry::new();
    let key: SigningKey = sigs.issue_key(ProcessId(0)).unwrap();
    let mut c = Chain::genesis(Block::genesis(vec![Transaction::pledge(ProcessId(0), 5, 0)]), &oracle);
    for i in 0..n {
        let data = vec![payloads.get(i).copied().unwrap_or(0)];
        let mut b = Block::candidate(c.digest(), vec![Transaction::payload(ProcessId(0), i as u64 + 1, data)], i as u64 + 1);
        b.proof = Some(Commitment::PowNonce(i as u64));
        b.producer = Some(ProcessId(0));
        b.signature = Some(sigs.sign(&oracle, &key, &b.signing_message()));
        c = c.push(b, &oracle, 0);
    }
    (oracle, sigs, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tx_codec_round_trips(tx in arb_tx()) {
        prop_assert_eq!(Transaction::decode(&tx.encode()).unwrap(), tx);
    }

    #[test]
    fn block_codec_round_trips(b in arb_block()) {
        prop_assert_eq!(Block::decode(&b.encode()).unwrap(), b);
    }

    #[test]
    fn decoders_reject_or_round_trip_any_bytes(data in prop::collection::vec(any::<u8>(), 0..128)) {
        if let Ok(b) = Block::decode(&data) {
            prop_assert_eq!(b.encode(), data.clone());
        }
        if let Ok(tx) = Transaction::decode(&data) {
            prop_assert_eq!(tx.encode(), data);
        }
    }

    #[test]
    fn ledger_matches_model_and_conserves(
        minted in prop::collection::vec((pid(), 0u64..50, 0u64..50), 1..6),
        txs in prop::collection::vec(arb_tx(), 0..80),
    ) {
        let mut genesis = Vec::new();
        let mut model = Model::default();
        for &(p, liquid, pledged) in &minted {
            genesis.push(Transaction::transfer(ProcessId(99), p, liquid, 0));
            genesis.push(Transaction::pledge(p, pledged, 0));
            *model.liquid.entry(p).or_default() += liquid;
            *model.pledged.entry(p).or_default() += pledged;
        }
        let mut ledger = Ledger::genesis(&genesis);
        let supply = ledger.total();
        prop_assert_eq!(supply, minted.iter().map(|&(_, a, b)| (a + b) as u128).sum::<u128>());
        for tx in &txs {
            let before = ledger.clone();
            let ok = ledger.apply(tx).is_ok();
            prop_assert_eq!(ok, model.apply(tx));
            if !ok {
                prop_assert_eq!(&ledger, &before);
            }
            prop_assert_eq!(ledger.total(), supply);
        }
        for p in (0..6).map(ProcessId) {
            prop_assert_eq!(ledger.liquid(p), Model::get(&model.liquid, p));
            prop_assert_eq!(ledger.pledged(p), Model::get(&model.pledged, p));
            prop_assert_eq!(ledger.last_nonce(p), Model::get(&model.nonce, p));
        }
    }

    #[test]
    fn prefixes_are_prefixes(n in 0usize..30, len in 0usize..40, k in 0usize..40) {
        let (_, _, c) = signed_chain(n, &[]);
        let p = c.prefix(len);
        prop_assert!(p.is_prefix_of(&c));
        prop_assert_eq!(p.len(), len.clamp(1, c.len()));
        let t = c.truncate(k);
        prop_assert!(t.is_prefix_of(&c));
        prop_assert_eq!(t.len(), c.len().saturating_sub(k).max(1));
        prop_assert!(c.prefix(0).is_prefix_of(&t));
        prop_assert_eq!(c.is_prefix_of(&p), p.len() == c.len());
    }

    #[test]
    fn hash_links_detect_tampering(n in 2usize..20, at in 1usize..20, payloads in prop::collection::vec(any::<u8>(), 20)) {
        let at = at.min(n);
        let (oracle, sigs, c) = signed_chain(n, &payloads);
        let ctx = ValidationCtx { oracle: &oracle, sigs: &sigs, genesis: c.genesis_digest() };
        prop_assert!(validate_chain(&ctx, &c, |_, _, _, _| true));
        let blocks = c.blocks();
        for (i, b) in blocks.iter().enumerate().skip(1) {
            prop_assert_eq!(b.parent, Some(blocks[i - 1].digest(&oracle)));
        }
        // Rebuild with the block at `at` altered but later blocks kept verbatim.
        let mut t = c.prefix(at);
        for (i, b) in blocks.iter().enumerate().skip(at) {
            let mut b = (**b).clone();
            if i == at {
                b.slot += 1000;
            }
            t = t.push(b, &oracle, 0);
        }
        prop_assert_ne!(t.get(at).unwrap().digest(&oracle), blocks[at].digest(&oracle));
        prop_assert_eq!(t.links_consistent(), at == n);
        prop_assert!(!validate_chain(&ctx, &t, |_, _, _, _| true));
    }
}

fn quick(kind: AllocatorKind) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::honest(kind, 0.01);
    cfg.r_a = 20;
    cfg.horizon = 800;
    cfg.seeds = vec![0, 1, 2];
    cfg
}

#[test]
fn same_seed_same_trace() {
    for kind in [AllocatorKind::Pow, AllocatorKind::Pos, AllocatorKind::Space] {
        let cfg = quick(kind);
        let (a, _) = simulate(&cfg, 7);
        let (b, _) = simulate(&cfg, 7);
        let tips = |t: &rcl::analysis::RunTrace| t.final_chains().map(|(p, c)| (p, c.digest())).collect::<Vec<_>>();
        assert_eq!(tips(&a), tips(&b));
        assert_eq!(a.delivered, b.delivered);
        let (c, _) = simulate(&cfg, 8);
        assert_ne!(tips(&a), tips(&c), "{kind:?}");
    }
}

#[test]
fn removing_a_seed_changes_only_its_row() {
    let cfg = quick(AllocatorKind::Pos);
    let all = run_scenario(&cfg).unwrap();
    let mut fewer = cfg.clone();
    fewer.seeds = vec![0, 2];
    let some = run_scenario(&fewer).unwrap();
    assert_eq!(some.rows[0], all.rows[0]);
    assert_eq!(some.rows[1], all.rows[2]);
    assert_eq!(run_seed(&cfg, 1), all.rows[1]);
}

#[test]
fn honest_runs_keep_prefix_comparable_delivery() {
    for kind in [AllocatorKind::Pow, AllocatorKind::Pos, AllocatorKind::Space] {
        let cfg = quick(kind);
        let (trace, _) = simulate(&cfg, 3);
        let seqs: Vec<Vec<&Transaction>> = trace.delivered.values().map(|v| v.iter().map(|(_, tx)| tx).collect()).collect();
        assert!(seqs.iter().any(|s| !s.is_empty()), "{kind:?} delivered nothing");
        for a in &seqs {
            for b in &seqs {
                let n = a.len().min(b.len());
                assert_eq!(a[..n], b[..n], "{kind:?}");
            }
        }
    }
}

#[test]
fn every_block_on_a_final_chain_was_issued() {
    for kind in [AllocatorKind::Pow, AllocatorKind::Pos] {
        let mut cfg = quick(kind);
        cfg.attack.strategy = StrategyKind::Private;
        cfg.attack.patience = Some(400);
        let (trace, _) = simulate(&cfg, 4);
        for (_, c) in trace.final_chains() {
            for link in c.links().take(c.height()) {
                assert!(trace.provenance.contains_key(&link.digest()), "{kind:?}: block without a recorded issuance");
            }
        }
    }
}

#[test]
fn corruption_spending_stays_within_budget() {
    let mut cfg = ScenarioConfig::honest(AllocatorKind::Pos, 0.01);
    cfg.n_processes = 17;
    cfg.r_a = 34;
    cfg.delta = 2;
    cfg.horizon = 20_000;
    cfg.attack.strategy = StrategyKind::LongRange;
    for seed in 0..5 {
        let (trace, _) = simulate(&cfg, seed);
        let spent: u64 = trace.corruptions.iter().map(|c| c.cost).sum();
        assert!(spent <= cfg.r_a, "seed {seed}: spent {spent}");
    }
}

#[test]
fn private_attack_without_resource_never_succeeds() {
    let mut cfg = quick(AllocatorKind::Pow);
    cfg.r_a = 0;
    cfg.attack.strategy = StrategyKind::Private;
    assert!(cfg.validate().is_ok());
    for seed in 0..3 {
        let (_, o) = simulate(&cfg, seed);
        assert!(!o.success);
    }
}
