//! Independent reference implementations and frozen reference values,
//! shared by the property tests and the acceptance suite.
#![allow(dead_code, clippy::approx_constant)]

use ppg_qa_core::QualityLabel;

/// Minimum over every monotone warping path, each summed in path order.
pub fn dtw_paths(a: &[f64], b: &[f64]) -> f64 {
    fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (a[i] - b[j]).abs();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Plain recursion of the DTW cost, no memoization.
pub fn dtw_recursive(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
    let d = (a[i] - b[j]).abs();
    match (i, j) {
        (0, 0) => d,
        (0, _) => d + dtw_recursive(a, b, 0, j - 1),
        (_, 0) => d + dtw_recursive(a, b, i - 1, 0),
        _ => {
            d + dtw_recursive(a, b, i - 1, j)
                .min(dtw_recursive(a, b, i, j - 1))
                .min(dtw_recursive(a, b, i - 1, j - 1))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitCase {
    pub rows: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub samples: Vec<usize>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn oracle_threshold(lo: f64, hi: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    if lo < mid && mid <= hi {
        mid
    } else {
        hi
    }
}

/// Every (feature, threshold) candidate in ascending order with its score.
pub fn candidates(
    case: &SplitCase,
    score: impl Fn(&[usize], &[usize]) -> Option<f64>,
) -> Vec<(usize, f64, f64)> {
    let n_features = case.rows[0].len();
    let mut out = Vec::new();
    for f in 0..n_features {
        let mut values: Vec<f64> = case.samples.iter().map(|&s| case.rows[s][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = oracle_threshold(w[0], w[1]);
            let (left, right): (Vec<usize>, Vec<usize>) =
                case.samples.iter().partition(|&&s| case.rows[s][f] < t);
            if let Some(sc) = score(&left, &right) {
                out.push((f, t, sc));
            }
        }
    }
    out
}

pub fn oracle_pick(c: &[(usize, f64, f64)]) -> Option<(usize, f64)> {
    let max = c.iter().map(|x| x.2).fold(f64::NEG_INFINITY, f64::max);
    c.iter()
        .filter(|x| x.2 >= max - 1e-9 * max.abs().max(1.0))
        .map(|x| (x.0, x.1))
        .min_by(|p, q| p.0.cmp(&q.0).then(p.1.total_cmp(&q.1)))
}

pub fn gini(idx: &[usize], y: &[u8]) -> f64 {
    let n = idx.len() as f64;
    let p1 = idx.iter().filter(|&&s| y[s] == 1).count() as f64 / n;
    1.0 - p1 * p1 - (1.0 - p1) * (1.0 - p1)
}

pub fn newton_score(l: &[usize], r: &[usize], g: &[f64], h: &[f64], lambda: f64, mcw: f64) -> Option<f64> {
    let sum = |idx: &[usize], v: &[f64]| idx.iter().map(|&s| v[s]).sum::<f64>();
    let (gl, hl, gr, hr) = (sum(l, g), sum(l, h), sum(r, g), sum(r, h));
    if hl < mcw || hr < mcw {
        return None;
    }
    let (gs, hs) = (gl + gr, hl + hr);
    Some(0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - gs * gs / (hs + lambda)))
}

pub fn gini_score(l: &[usize], r: &[usize], y: &[u8]) -> f64 {
    let n = (l.len() + r.len()) as f64;
    let all: Vec<usize> = l.iter().chain(r).copied().collect();
    n * gini(&all, y) - l.len() as f64 * gini(l, y) - r.len() as f64 * gini(r, y)
}

/// Expected feature `i` after the input is mapped to `a * x + b` (a > 0):
/// location features follow the map, spread features scale, shape features
/// (skewness, kurtosis, heart rate, all correlation moments) stay put.
pub fn transformed_feature(i: usize, v: f64, a: f64, b: f64) -> f64 {
    match i {
        0 | 1 | 6 | 7 => a * v + b,
        2 | 8 | 11 | 12 | 13 | 14 | 17 | 18 | 19 => a * v,
        _ => v,
    }
}

/// Absolute tolerance for [`transformed_feature`].
pub fn transformed_tolerance(i: usize, expected: f64, b: f64) -> f64 {
    let offset = if matches!(i, 0 | 1 | 6 | 7) { b.abs() } else { 0.0 };
    1e-6 * (1.0 + expected.abs() + offset)
}

pub fn label(good: bool) -> QualityLabel {
    if good {
        QualityLabel::Good
    } else {
        QualityLabel::Bad
    }
}

/// scipy.signal.cheby2(2, 20, [0.25, 15], "bandpass", fs=fs) in expanded and
/// second-order-section form.
pub struct Reference {
    pub fs: f64,
    pub b: [f64; 5],
    pub a: [f64; 5],
    pub sos: [[f64; 6]; 2],
}

pub const REFERENCE: [Reference; 3] = [
    Reference {
        fs: 64.0,
        b: [
            0.15197869502846187,
            -0.23190166508725413,
            0.15996072116358442,
            -0.23190166508725413,
            0.1519786950284619,
        ],
        a: [
            1.0,
            -2.934186289911158,
            3.2681898865042136,
            -1.7038470118339246,
            0.37099122570086873,
        ],
        sos: [
            [
                0.15197869502846187,
                0.07200932651784922,
                0.15197869502846187,
                1.0,
                -1.0028501313047957,
                0.39710164160144096,
            ],
            [
                1.0,
                -1.9996947042359345,
                1.0000000000000002,
                1.0,
                -1.9313361586063622,
                0.9342475246506826,
            ],
        ],
    },
    Reference {
        fs: 128.0,
        b: [
            0.10246294807917185,
            -0.31698992166397416,
            0.42906105069167233,
            -0.31698992166397416,
            0.10246294807917182,
        ],
        a: [
            1.0,
            -3.5300411577223247,
            4.701720306165699,
            -2.809757275557162,
            0.6381491623344653,
        ],
        sos: [
            [
                0.10246294807917185,
                -0.11207186412929496,
                0.10246294807917182,
                1.0,
                -1.5637064531299114,
                0.6598766946406149,
            ],
            [
                1.0,
                -1.9999234979686664,
                1.0,
                1.0,
                -1.9663347045924136,
                0.9670733449406286,
            ],
        ],
    },
    Reference {
        fs: 256.0,
        b: [
            0.09556482270116272,
            -0.35785129770447266,
            0.5245734170492559,
            -0.3578512977044725,
            0.09556482270116268,
        ],
        a: [
            1.0,
            -3.7749871768098617,
            5.353729409189084,
            -3.382038777279592,
            0.8033012153267309,
        ],
        sos: [
            [
                0.09556482270116272,
                -0.1667234810551652,
                0.09556482270116269,
                1.0,
                -1.7917114547651947,
                0.8168097727659784,
            ],
            [
                1.0,
                -1.9999808637428884,
                0.9999999999999998,
                1.0,
                -1.9832757220446673,
                0.9834618072779625,
            ],
        ],
    },
];

/// (input, [mean, median, std, skewness, excess kurtosis]) from an
/// independent float64 implementation with biased central moments.
pub const MOMENT_GOLDENS: &[(&[f64], [f64; 5])] = &[
    (
        &[1.0, 2.0, 3.0, 4.0, 5.0],
        [3.0, 3.0, 1.4142135623730951, 0.0, -1.3],
    ),
    (&[7.0, 7.0, 7.0], [7.0, 7.0, 0.0, 0.0, 0.0]),
    (&[1.0, 1.0, 1.0, 1.0, 10.0], [2.8, 1.0, 3.6, 1.5, 0.25]),
    (&[42.0], [42.0, 42.0, 0.0, 0.0, 0.0]),
    (&[-3.0, 3.0], [0.0, 0.0, 3.0, 0.0, -2.0]),
    (&[0.5, -0.5, 0.5, -0.5, 0.5, -0.5], [0.0, 0.0, 0.5, 0.0, -2.0]),
    (
        &[-2.0, -1.0, 0.0, 1.0, 2.0, 100.0],
        [
            16.666666666666668,
            0.5,
            37.29015360058947,
            1.7840321919257707,
            1.1913775957863748,
        ],
    ),
    (
        &[
            0.62661813515069,
            -1.1783227157606397,
            -20.727316160277052,
            1.6916206780951204,
            2.411002611091734,
            -0.8747981025609863,
            -0.7462361000326367,
            0.060272570015224534,
            3.154251023094878,
            1.664467078409766,
            -0.6099381793372377,
            -3.2608674862810916,
            2.649613309127309,
            -0.5305933414019598,
            -1.58397660782233,
        ],
        [
            -1.1502802192326143,
            -0.5305933414019598,
            5.508126369278704,
            -2.904081949164972,
            7.701734840057033,
        ],
    ),
    (
        &[
            0.10126269485120312,
            0.47675501878745835,
            -1.0481303283526195,
            -1.6361258982337126,
            3.4846083031689457,
            -0.3189162759917227,
            -5.27181816344765,
            -1.314149190565071,
            15.351259852587294,
            -7.6818832177087435,
            -0.8243872025443003,
            1.280887358836809,
            1.3155053595403536,
            -0.1726414952574107,
            -0.2610147817517919,
            -3.926494440502017,
            -0.33604294377070165,
            5.884012177781405,
            2.8917196738699382,
            0.11827427239712847,
            -0.6820204979096439,
            0.31590893419697813,
            1.4169589095023083,
            -0.3052134856169988,
            -0.1151674311423301,
            1.3965327219637327,
            0.3629199778138908,
            3.374347943323211,
            -1.9602495963854545,
            -0.14336387880448578,
            -0.7518834777339046,
            0.28045625771275734,
            -9.272002037158718,
            0.29551309797285924,
            -0.911857016238699,
            -2.351182295693287,
            -0.22367920850550937,
            1.263630174026292,
            -0.027215390530815106,
            0.7770454450652657,
        ],
        [
            0.021303997988806108,
            -0.12926565497340795,
            3.600104363713425,
            1.29545969704745,
            7.2441031316145414,
        ],
    ),
    (
        &[
            -0.466622617797556,
            -1.4954484017273064,
            -0.12761874184623326,
            0.19591943562431058,
            0.16448711650250541,
            -0.19800979344399408,
            0.18594293087633743,
            0.177361658982001,
            0.4050683838900256,
            0.025225214035725262,
            -1.7828706326846306,
            -0.8147067236288767,
            0.34557343099545634,
            -0.9103295311933346,
            -0.7984248684613153,
            0.11335636333069822,
            -0.04552926588091465,
            0.8938070413179886,
            0.5118538884830525,
            -0.43513382182385457,
            0.11425397649853589,
            -2.8588525107765945,
            -0.7974051542113659,
            -0.147432308720016,
            -2.3872431436868378,
            -0.3224429777130407,
            0.2516400225857998,
            1.0349501503519076,
            0.4029263529865078,
            1.8842597000918537,
            1.5279587817401392,
            -1.6343614038873584,
            -0.22605077018427153,
        ],
        [
            -0.21860297634468656,
            -0.04552926588091465,
            0.9919775009629436,
            -0.5845669677465308,
            0.6830974798685048,
        ],
    ),
    (
        &[
            0.9657735646615846,
            0.005613530747212073,
            2.039881909686239,
            0.1816596172590653,
            1.9876573094212484,
            0.6984048268592523,
            2.207539144964387,
            4.356243602172576,
            3.163126502161758,
            1.6708273451166835,
            0.7720821665113504,
            2.437664651536214,
            3.0197360131078232,
            4.244586047933073,
            2.1864016136493367,
            0.10210938031775897,
            0.8549246017072277,
            6.477324411149926,
            0.023011144386106592,
            0.22660086952555827,
            7.637732770759607,
        ],
        [
            2.15518576303019,
            1.9876573094212484,
            2.049495668062001,
            1.1844933906750617,
            0.7743887874907144,
        ],
    ),
    (
        &[
            0.9529535963512217,
            0.3232741626917237,
            2.4268839485173626,
            3.3345675540756456,
            -4.7898156086751325,
            3.9714951428242813,
            1.0224206420499833,
            3.766199152604967,
            -0.10198200774670063,
            -1.670115134667168,
            -3.6651405941283945,
            2.3749278856566125,
            -3.802037659764168,
            3.3403884910166255,
            -3.219796915456711,
            -4.296537349730908,
            1.7470066003746663,
            0.15969955385132995,
            -3.1877494086176927,
            -4.615440993147271,
            -2.1609739545439863,
            3.6612617521213604,
            -1.2554508750932456,
            2.7104624592773474,
            4.873343968992241,
            3.1263948533081702,
            4.870003292738296,
            -0.14044615234214497,
            4.513678499720813,
            -3.043738457687647,
            -3.089571159355896,
            1.9457707191603104,
            4.664925374612782,
            1.4196973806660012,
            0.72714307965144,
            3.647048528652668,
            -2.2515641025536928,
            3.8088902584279687,
            -4.406754584638259,
            -2.857233495694013,
            3.1195036119562474,
            0.5964014717001547,
            3.369887713592677,
            -1.1944301369239838,
            -4.6610117990997395,
            0.818307796575592,
            1.4780418216740951,
            -3.79159350079029,
            1.1261841915619177,
            2.4684253966324867,
        ],
        [
            0.3632761002075989,
            0.8856306964634069,
            3.0245815284112423,
            -0.25838125460444533,
            -1.2719910311591274,
        ],
    ),
    (
        &[1000000.1, 1000000.2, 1000000.4, 1000000.8],
        [
            1000000.375,
            1000000.3,
            0.26809513240165755,
            0.6568077344642383,
            -1.0989792061387988,
        ],
    ),
    (
        &[-1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, 1.0],
        [-0.8, -1.0, 0.6, 2.6666666666666665, 5.111111111111111],
    ),
    (
        &[
            0.0,
            0.0980171403295606,
            0.19509032201612825,
            0.29028467725446233,
            0.3826834323650898,
            0.47139673682599764,
            0.5555702330196022,
            0.6343932841636455,
            0.7071067811865475,
            0.773010453362737,
            0.8314696123025452,
            0.8819212643483549,
            0.9238795325112867,
            0.9569403357322089,
            0.9807852804032304,
            0.9951847266721968,
            1.0,
            0.9951847266721969,
            0.9807852804032304,
            0.9569403357322089,
            0.9238795325112867,
            0.881921264348355,
            0.8314696123025455,
            0.7730104533627371,
            0.7071067811865476,
            0.6343932841636455,
            0.5555702330196022,
            0.47139673682599786,
            0.3826834323650899,
            0.2902846772544624,
            0.1950903220161286,
            0.09801714032956083,
            1.2246467991473532e-16,
            -0.09801714032956059,
            -0.19509032201612836,
            -0.2902846772544621,
            -0.38268343236508967,
            -0.47139673682599764,
            -0.555570233019602,
            -0.6343932841636453,
            -0.7071067811865475,
            -0.7730104533627367,
            -0.8314696123025452,
            -0.8819212643483549,
            -0.9238795325112865,
            -0.9569403357322088,
            -0.9807852804032303,
            -0.9951847266721969,
            -1.0,
            -0.9951847266721969,
            -0.9807852804032304,
            -0.9569403357322089,
            -0.9238795325112866,
            -0.881921264348355,
            -0.8314696123025455,
            -0.7730104533627369,
            -0.7071067811865477,
            -0.6343932841636459,
            -0.5555702330196022,
            -0.4713967368259979,
            -0.3826834323650904,
            -0.2902846772544625,
            -0.19509032201612872,
            -0.0980171403295605,
        ],
        [
            1.2321851479528582e-17,
            6.123233995736766e-17,
            0.7071067811865476,
            2.369621529387172e-17,
            -1.5,
        ],
    ),
    (
        &[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0],
        [
            3.875,
            3.5,
            2.5708704751503917,
            0.6682892518272332,
            -0.5349496168871452,
        ],
    ),
    (
        &[
            3.9725443957893716,
            5.228798082276413,
            6.1073538607045865,
            0.5129346220436715,
            1.5828563819698438,
            0.3947760064736972,
            2.2893956506884714,
            5.961855872078202,
            0.6809908341506005,
            1.3766536267231062,
            3.585277203341317,
            2.8980775254359252,
            0.36620974164426817,
            7.7175877005873454,
            2.0443990258156037,
            1.2459487756442114,
            1.0504475965044087,
            2.8214167983638405,
            4.635686510344622,
            0.14792370844869782,
            0.2698041642720832,
            0.07471165052597033,
            1.934278532851256,
            1.7744203349613599,
            0.5900044214441611,
            0.19240299267937575,
            7.109286947501171,
        ],
        [
            2.4654089986393917,
            1.7744203349613599,
            2.2569080063441116,
            0.8985138042763383,
            -0.3825796622826766,
        ],
    ),
    (
        &[0.0, 0.0, 0.0, 0.001],
        [
            0.00025,
            0.0,
            0.00043301270189221935,
            1.1547005383792515,
            -0.6666666666666666,
        ],
    ),
    (
        &[
            -4.795170048928563,
            -4.7319892905469025,
            -0.14626611145791074,
            -0.41827649149196283,
            -0.41150190325587643,
            -0.4080716111706507,
            -3.6851246974290834,
            -1.82007929047058,
            -2.4458113030656694,
            -0.009061406696066173,
            -1.4303556596062355,
            -0.7559314787229798,
            -5.248490194648227,
            -4.46082066229369,
            -3.3063241615797923,
            -0.5294833390869255,
            -3.63033646488508,
            -0.5821856070790776,
        ],
        [
            -2.1564044290230706,
            -1.6252174750384079,
            1.8239819886014315,
            -0.368705006706037,
            -1.4608108672172857,
        ],
    ),
    (
        &[2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5, 2.5],
        [2.5, 2.5, 0.0, 0.0, 0.0],
    ),
];
