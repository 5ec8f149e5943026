//! File formats: images, offline records and config files.

use proptest::prelude::*;
use richcld::cover::Point;
use richcld::env::ppm::{observation_image, RgbImage};
use richcld::env::Observation;
use richcld::harness::{Command, ExperimentConfig};
use richcld::offline::{read_records, write_records, OfflineRecord};

fn observations() -> impl Strategy<Value = Observation> {
    prop_oneof![
        any::<u32>().prop_map(|t| Observation::Token(t as u64)),
        (2u32..60, 1u8..=2, any::<u32>()).prop_map(|(width, dims, i)| Observation::Pixel {
            width,
            dims,
            index: i % width.pow(dims as u32),
        }),
    ]
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, -1.0f64..1.0, Just(0.0), Just(f64::MIN_POSITIVE)]
}

fn record(dim_s: usize, dim_a: usize) -> impl Strategy<Value = OfflineRecord> {
    (1usize..9, prop::collection::vec(finite(), dim_s), prop::collection::vec(finite(), dim_a), finite(), observations(), observations())
        .prop_map(|(h, s, a, r, obs, next_obs)| OfflineRecord {
            h,
            s: Point::from_iter(s),
            a: Point::from_iter(a),
            r,
            obs,
            next_obs,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ppm_headers_match_payload(width in 1usize..40, height in 1usize..40, seed in any::<u8>()) {
        let mut img = RgbImage::new(width, height, [seed, 0, 255]);
        img.pixels[(seed as usize) % (width * height)] = [1, 2, 3];
        let bytes = img.encode();
        let header = format!("P6\n{width} {height}\n255\n");
        prop_assert!(bytes.starts_with(header.as_bytes()));
        prop_assert_eq!(bytes.len(), header.len() + 3 * width * height);
        prop_assert_eq!(RgbImage::decode(&bytes).unwrap(), img);
    }

    #[test]
    fn pixel_observations_render(obs in observations()) {
        match (obs, observation_image(&obs)) {
            (Observation::Pixel { width, dims: 2, .. }, Ok(img)) => {
                prop_assert_eq!((img.width, img.height), (width as usize, width as usize));
                prop_assert_eq!(img.pixels.iter().filter(|p| **p == [255, 255, 255]).count(), 1);
                prop_assert_eq!(RgbImage::decode(&img.encode()).unwrap(), img);
            }
            (Observation::Pixel { dims: 2, .. }, Err(e)) => prop_assert!(false, "{}", e),
            (_, result) => prop_assert!(result.is_err()),
        }
    }

    #[test]
    fn references_round_trip(obs in observations()) {
        prop_assert_eq!(Observation::parse_reference(&obs.reference()).unwrap(), obs);
    }

    #[test]
    fn records_round_trip(dims in (1usize..=3, 1usize..=2).prop_flat_map(|(s, a)| (Just(s), Just(a), prop::collection::vec(record(s, a), 0..20)))) {
        let (dim_s, dim_a, records) = dims;
        let mut buf = Vec::new();
        write_records(&records, dim_s, dim_a, &mut buf).unwrap();
        let (s, a, back) = read_records(buf.as_slice()).unwrap();
        prop_assert_eq!((s, a), (dim_s, dim_a));
        prop_assert_eq!(back, records);
    }

    #[test]
    fn configs_round_trip(cmd in prop::sample::select(Command::ALL.to_vec()),
                          seeds in prop::collection::btree_set(0u64..1000, 1..5),
                          iterations in 1usize..100, eta in 0.05f64..1.0) {
        let mut cfg = ExperimentConfig::preset(cmd);
        cfg.seeds = seeds.into_iter().collect();
        cfg.criee.run.iterations = iterations;
        cfg.offline.eta = eta;
        let text = cfg.to_toml().unwrap();
        prop_assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }
}
