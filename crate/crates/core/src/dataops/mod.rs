//! Synthetic multi-domain image tasks and the block-shuffle corruption family.

pub mod cache;
pub mod domain;
mod render;
pub mod shuffle;

pub use cache::{generate_cached, read_dataset, write_dataset};
pub use domain::{generate, generate_mixture, render_example, Dataset, DomainId, DomainSpec, Provenance, Split};
pub use shuffle::{block_shuffle, relative_accuracy_drop, shuffle_dataset, BlockSize, ShuffleSpec};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = DomainSpec::new(DomainId::ClipartLike);
        let a = generate(&spec, Split::Train, 40, 3).unwrap();
        let b = generate(&spec, Split::Train, 40, 3).unwrap();
        assert_eq!(a, b);
        let serial = crate::exec::with_jobs(1, || generate(&spec, Split::Train, 40, 3).unwrap());
        assert_eq!(a, serial);
    }

    #[test]
    fn grayscale_domains_have_equal_channels() {
        for d in [DomainId::QuickdrawLike, DomainId::XrayLike] {
            let ds = generate(&DomainSpec::new(d), Split::Test, 20, 1).unwrap();
            for px in ds.images.data().chunks_exact(3) {
                assert!(px[0] == px[1] && px[1] == px[2]);
            }
        }
    }

    #[test]
    fn classes_balanced() {
        let ds = generate(&DomainSpec::new(DomainId::Source), Split::Train, 1000, 5).unwrap();
        assert_eq!(ds.class_counts(), vec![100; 10]);
        let odd = generate(&DomainSpec::new(DomainId::Source), Split::Train, 23, 5).unwrap();
        let c = odd.class_counts();
        assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
    }

    #[test]
    fn small_n_warns_and_zero_fails() {
        let ds = generate(&DomainSpec::new(DomainId::Source), Split::Train, 4, 5).unwrap();
        assert!(ds.provenance.warning.is_some());
        assert!(generate(&DomainSpec::new(DomainId::Source), Split::Train, 0, 5).is_err());
    }

    #[test]
    fn train_and_test_differ() {
        let spec = DomainSpec::new(DomainId::RealLike);
        let tr = generate(&spec, Split::Train, 10, 1).unwrap();
        let te = generate(&spec, Split::Test, 10, 1).unwrap();
        assert_ne!(tr.images, te.images);
        assert_eq!(tr.labels, te.labels);
    }

    #[test]
    fn values_in_unit_range() {
        for d in DomainId::ALL {
            let ds = generate(&DomainSpec::new(d), Split::Train, 20, 2).unwrap();
            assert!(ds.images.data().iter().all(|v| (0.0..=1.0).contains(v)), "{d}");
        }
    }

    #[test]
    fn llds_round_trip_and_truncation() {
        let ds = generate(&DomainSpec::new(DomainId::XrayLike), Split::Train, 12, 9).unwrap();
        let bytes = cache::encode_dataset(&ds).unwrap();
        assert_eq!(&bytes[..4], b"LLDS");
        assert_eq!(cache::decode_dataset(&bytes).unwrap(), ds);
        assert!(matches!(
            cache::decode_dataset(&bytes[..bytes.len() - 3]),
            Err(crate::Error::Truncated(crate::error::Section::Payload))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(cache::decode_dataset(&bad), Err(crate::Error::BadMagic { .. })));
    }

    #[test]
    fn cache_dir_reuses_file() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DomainSpec::new(DomainId::QuickdrawLike);
        let a = generate_cached(Some(dir.path()), &spec, Split::Train, 15, 4).unwrap();
        let path = cache::cache_path(dir.path(), &spec, Split::Train, 15, 4);
        assert!(path.exists());
        let b = generate_cached(Some(dir.path()), &spec, Split::Train, 15, 4).unwrap();
        assert_eq!(a, b);
    }
}
