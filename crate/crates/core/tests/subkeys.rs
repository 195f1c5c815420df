use cardauth_core::rc4pr::{count_subkeys, rc4pr_apply_counted, RoundKey};

/// (file size in bytes, subkeys used) for the seven benchmark files.
pub const BENCH_FILES: [(u64, u64); 7] = [
    (1_779_700, 111_232),
    (15_712_007, 982_001),
    (83_987, 5_250),
    (366_889, 22_931),
    (25_284, 1_581),
    (1_337_344, 83_584),
    (323_742, 20_234),
];

#[test]
fn benchmark_file_counts() {
    for (size, subkeys) in BENCH_FILES {
        assert_eq!(count_subkeys(size), subkeys, "size {size}");
    }
    let total_size: u64 = BENCH_FILES.iter().map(|f| f.0).sum();
    let total: u64 = BENCH_FILES.iter().map(|f| count_subkeys(f.0)).sum();
    assert_eq!(total_size, 19_628_953);
    assert_eq!(total, 1_226_813);
}

#[test]
fn small_counts() {
    assert_eq!(count_subkeys(321), 21);
    assert_eq!(count_subkeys(16), 1);
    assert_eq!(count_subkeys(17), 2);
    assert_eq!(count_subkeys(0), 1);
}

#[test]
fn cipher_reports_the_same_count() {
    let master = RoundKey::new([7; 16]);
    for len in [0usize, 1, 15, 16, 17, 321, 1024] {
        let (_, used) = rc4pr_apply_counted(&master, &vec![0xA5; len]);
        assert_eq!(used, count_subkeys(len as u64), "len {len}");
    }
}
