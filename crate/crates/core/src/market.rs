//! One trading period: buyers arrive with fresh valuations and each buys a
//! single unit if their valuation is at least the posted price.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::demand::DemandCurve;
use crate::error::{Error, Result};

/// What the linear learner observes each period: the price it charged and
/// the fraction of buyers who bought.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketOutcome {
    pub price: f64,
    /// `#{i : v_i >= price} / N`, always a multiple of `1/N`.
    pub quantity: f64,
}

/// Truthfully reported valuations, consumed by the empirical baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValuationBatch {
    pub values: Vec<f64>,
}

impl ValuationBatch {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws `n_buyers` valuations and counts purchases at `price`. Ties buy.
///
/// Valuations are `F⁻¹(u)` with one uniform `u` per buyer, and since `F⁻¹`
/// is nondecreasing, `F⁻¹(u) >= p` exactly when `u >= F(p)`. The comparison
/// is done on the uniform side, which consumes the random stream in the same
/// order as [`realize_valuations`] without paying for `F⁻¹`.
pub fn realize_demand<R: Rng + ?Sized>(
    curve: &DemandCurve,
    price: f64,
    n_buyers: usize,
    rng: &mut R,
) -> Result<MarketOutcome> {
    if n_buyers == 0 {
        return Err(Error::invalid("n_buyers must be at least 1"));
    }
    let threshold = curve.cdf(price)?;
    let bought = (0..n_buyers)
        .filter(|_| rng.random::<f64>() >= threshold)
        .count();
    Ok(MarketOutcome {
        price,
        quantity: bought as f64 / n_buyers as f64,
    })
}

pub fn realize_valuations<R: Rng + ?Sized>(
    curve: &DemandCurve,
    n_buyers: usize,
    rng: &mut R,
) -> Result<ValuationBatch> {
    if n_buyers == 0 {
        return Err(Error::invalid("n_buyers must be at least 1"));
    }
    Ok(ValuationBatch {
        values: (0..n_buyers).map(|_| curve.sample_valuation(rng)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn curves() -> Vec<DemandCurve> {
        vec![
            DemandCurve::uniform(0.0, 1.0).unwrap(),
            DemandCurve::truncated_gaussian(10.0, 11.0).unwrap(),
            DemandCurve::tabulated(vec![(1.0, 0.0), (2.0, 0.4), (4.0, 1.0)]).unwrap(),
        ]
    }

    #[test]
    fn prices_outside_support_are_deterministic() {
        let mut rng = stream_rng(1, 0);
        for c in curves() {
            let all = realize_demand(&c, c.support_lo() - 1.0, 50, &mut rng).unwrap();
            assert_eq!(all.quantity, 1.0);
            let none = realize_demand(&c, c.support_hi() + 1.0, 50, &mut rng).unwrap();
            assert_eq!(none.quantity, 0.0);
        }
    }

    #[test]
    fn zero_buyers_is_an_error() {
        let c = DemandCurve::uniform(0.0, 1.0).unwrap();
        let mut rng = stream_rng(1, 0);
        assert!(realize_demand(&c, 0.5, 0, &mut rng).is_err());
        assert!(realize_valuations(&c, 0, &mut rng).is_err());
    }

    #[test]
    fn mean_quantity_tracks_survival() {
        let c = DemandCurve::uniform(0.0, 1.0).unwrap();
        let mut rng = stream_rng(2, 0);
        let periods = 10_000;
        let mean = (0..periods)
            .map(|_| realize_demand(&c, 0.5, 100, &mut rng).unwrap().quantity)
            .sum::<f64>()
            / periods as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn demand_noise_is_centered() {
        let c = DemandCurve::truncated_gaussian(10.0, 11.0).unwrap();
        let p = 14.0;
        let expected = c.survival(p).unwrap();
        let mut rng = stream_rng(3, 0);
        let n = 10_000;
        let noise: Vec<f64> = (0..n)
            .map(|_| realize_demand(&c, p, 100, &mut rng).unwrap().quantity - expected)
            .collect();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let sd = (noise.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn quantity_is_a_multiple_of_one_over_n() {
        let c = DemandCurve::truncated_gaussian(10.0, 13.0).unwrap();
        let mut rng = stream_rng(4, 0);
        for n in [1, 3, 7, 100] {
            for _ in 0..200 {
                let q = realize_demand(&c, 15.0, n, &mut rng).unwrap().quantity;
                let k = (q * n as f64).round();
                assert_eq!(q, k / n as f64);
            }
        }
    }

    #[test]
    fn demand_equals_thresholded_valuations() {
        for c in curves() {
            for (seed, price) in [(5u64, 0.3), (6, 1.7), (7, 12.0), (8, 2.5), (9, 30.0)] {
                let mut a = stream_rng(seed, 0);
                let mut b = stream_rng(seed, 0);
                for _ in 0..100 {
                    let q = realize_demand(&c, price, 100, &mut a).unwrap().quantity;
                    let batch = realize_valuations(&c, 100, &mut b).unwrap();
                    let bought = batch.values.iter().filter(|&&v| v >= price).count();
                    assert_eq!(q, bought as f64 / 100.0);
                }
            }
        }
    }

    #[test]
    fn valuations_are_replayable_and_in_support() {
        let c = DemandCurve::uniform(0.0, 1.0).unwrap();
        let x = realize_valuations(&c, 2, &mut stream_rng(9, 1)).unwrap();
        let y = realize_valuations(&c, 2, &mut stream_rng(9, 1)).unwrap();
        assert_eq!(x, y);

        let big = realize_valuations(&c, 100_000, &mut stream_rng(9, 2)).unwrap();
        let mean = big.values.iter().sum::<f64>() / big.len() as f64;
        assert!((mean - 0.5).abs() < 0.005);

        let g = DemandCurve::truncated_gaussian(10.0, 11.0).unwrap();
        let batch = realize_valuations(&g, 10_000, &mut stream_rng(9, 3)).unwrap();
        assert!(batch
            .values
            .iter()
            .all(|&v| (g.support_lo()..=g.support_hi()).contains(&v)));
    }
}
