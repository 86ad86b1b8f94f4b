#![allow(dead_code)]

use gtcu::tagbus::{format_real, Message, NakReason, Quality, TagName, WireValue};
use proptest::prelude::*;

pub fn tag_name() -> impl Strategy<Value = TagName> {
    "[a-z0-9_]{1,8}(\\.[a-z0-9_]{1,8}){1,3}".prop_map(|s| TagName::new(s).unwrap())
}

/// Reals already in the 9-significant-digit wire form.
pub fn wire_real() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |x| x.is_finite()),
        -1e6..1e6f64,
        Just(0.0),
        Just(-0.0),
    ]
    .prop_map(|x| format_real(x).parse().unwrap())
}

pub fn wire_value() -> impl Strategy<Value = WireValue> {
    prop_oneof![
        any::<i64>().prop_map(WireValue::Int),
        wire_real().prop_map(WireValue::Real),
        "[a-zA-Z_][a-zA-Z0-9_.,:-]{0,15}".prop_map(WireValue::Text),
    ]
}

pub fn quality() -> impl Strategy<Value = Quality> {
    prop_oneof![Just(Quality::Good), Just(Quality::Bad), Just(Quality::Stale)]
}

pub fn nak_reason() -> impl Strategy<Value = NakReason> {
    prop::sample::select(vec![
        NakReason::BadVerb,
        NakReason::BadArity,
        NakReason::BadValue,
        NakReason::BadTag,
        NakReason::ReadOnly,
        NakReason::NoSuchTag,
        NakReason::Overrun,
    ])
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        tag_name().prop_map(|tag| Message::Request { tag }),
        (tag_name(), wire_value()).prop_map(|(tag, value)| Message::Poke { tag, value }),
        tag_name().prop_map(|tag| Message::Advise { tag }),
        tag_name().prop_map(|tag| Message::Unadvise { tag }),
        (tag_name(), wire_value(), quality(), any::<u64>()).prop_map(|(tag, value, quality, timestamp)| {
            Message::Data {
                tag,
                value,
                quality,
                timestamp,
            }
        }),
        tag_name().prop_map(|tag| Message::Ack { tag }),
        (prop::option::of(tag_name()), nak_reason()).prop_map(|(tag, reason)| Message::Nak { tag, reason }),
    ]
}

/// Malformed lines and the NAK reason each must produce.
pub const MALFORMED: &[(&str, NakReason)] = &[
    ("FROB x.y\n", NakReason::BadVerb),
    ("request plant.n_hpt\n", NakReason::BadVerb),
    ("\n", NakReason::BadVerb),
    ("REQUESTplant.n_hpt\n", NakReason::BadVerb),
    (" REQUEST plant.n_hpt\n", NakReason::BadVerb),
    ("DATA a.b 1.0 GOOD\n", NakReason::BadArity),
    ("REQUEST\n", NakReason::BadArity),
    ("REQUEST a.b c\n", NakReason::BadArity),
    ("POKE cmd.start\n", NakReason::BadArity),
    ("POKE cmd.start 1 2\n", NakReason::BadArity),
    ("REQUEST  a.b\n", NakReason::BadArity),
    ("REQUEST a.b \n", NakReason::BadArity),
    ("ACK\n", NakReason::BadArity),
    ("NAK a.b\n", NakReason::BadArity),
    ("DATA a.b 1.0 GOOD 5 6\n", NakReason::BadArity),
    ("POKE cmd.start 1x\n", NakReason::BadValue),
    ("POKE cmd.start 1.2.3\n", NakReason::BadValue),
    ("POKE cmd.start -inf\n", NakReason::BadValue),
    ("POKE cmd.start -\n", NakReason::BadValue),
    ("POKE cmd.start 1e999\n", NakReason::BadValue),
    ("POKE cmd.start +5\n", NakReason::BadValue),
    ("POKE cmd.start ring!\n", NakReason::BadValue),
    ("DATA a.b 1.0 FINE 5\n", NakReason::BadValue),
    ("DATA a.b 1.0 GOOD -5\n", NakReason::BadValue),
    ("DATA a.b 1.0 GOOD 99999999999999999999999\n", NakReason::BadValue),
    ("NAK a.b whatever\n", NakReason::BadValue),
    ("REQUEST Bad.Name\n", NakReason::BadTag),
    ("REQUEST nodots\n", NakReason::BadTag),
    ("POKE a..b 1\n", NakReason::BadTag),
    ("ADVISE plant.n-hpt\n", NakReason::BadTag),
];
