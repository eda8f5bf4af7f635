import pytest

from multidial.dialogue import (
    ActError,
    ActionCatalog,
    DialogueAct,
    build_full_catalog,
    build_reduced_catalog,
    parse_act,
    stock_domains,
)


def test_parse_bare_act():
    act = parse_act("[Salutation(greeting)]", "meta")
    assert act.act_type == "Salutation"
    assert act.arg() == "greeting"
    assert act.slots() == ()
    assert act.key() == "Salutation(greeting)"


def test_parse_slot_act():
    act = parse_act("ExpConfirm(h_day=$h_day,h_month=$h_month)", "hotels")
    assert act.slots() == ("h_day", "h_month")
    assert act.key() == "ExpConfirm(h_day=$h_day,h_month=$h_month)"


def test_parse_rejects_unknown_type():
    with pytest.raises(ActError):
        parse_act("[Wave(hello)]", "meta")


def test_parse_round_trip():
    text = "ImpConfirm(h_city=$h_city,h_nights=$h_nights)"
    act = parse_act(text, "hotels")
    assert parse_act(act.key(), "hotels") == act


def test_full_catalog_has_69_actions():
    catalog = build_full_catalog(stock_domains())
    assert len(catalog) == 69
    keys = {str(a) for a in catalog.acts}
    assert "meta:Salutation(greeting)" in keys
    assert "meta:Request(hmihy)" in keys
    assert "meta:AskFor(h_more)" in keys
    assert "hotels:Apology(h_nights)" in keys
    assert "hotels:ExpConfirm(h_day=$h_day,h_month=$h_month,h_nights=$h_nights)" in keys
    assert "restaurants:ExpConfirm(r_price=$r_price,r_area=$r_area)" in keys
    assert "restaurants:Provide(r_info)" in keys


def test_reduced_catalog_has_24_actions():
    catalog = build_reduced_catalog(stock_domains())
    assert len(catalog) == 24
    keys = {str(a) for a in catalog.acts}
    assert "hotels:Request(h_city)" in keys
    assert "restaurants:ExpConfirm(r_food=$r_food)" in keys
    assert "meta:Salutation(closing)" in keys
    # the reduced set carries no apologies or implicit confirms
    assert not any("Apology" in k or "ImpConfirm" in k for k in keys)


def test_catalog_indices_are_stable_and_unique():
    catalog = build_full_catalog(stock_domains())
    assert sorted(catalog.index.values()) == list(range(69))
    per_domain = [set(catalog.domain_indices(d)) for d in catalog.domains]
    for i, a in enumerate(per_domain):
        for b in per_domain[i + 1 :]:
            assert not a & b


def test_catalog_find():
    catalog = build_full_catalog(stock_domains())
    i = catalog.find("hotels", "Retrieve(h_info)")
    assert catalog[i].act_type == "Retrieve"
    with pytest.raises(ActError):
        catalog.find("hotels", "Retrieve(x_info)")


def test_duplicate_acts_rejected():
    act = parse_act("Request(hmihy)", "meta")
    with pytest.raises(ActError):
        ActionCatalog([act, act])
