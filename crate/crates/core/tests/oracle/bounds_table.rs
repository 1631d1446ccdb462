// Generated by bounds_oracle.py: (evaluator, arguments, natural log of the bound).
const TABLE: &[(&str, &[f64], &str)] = &[
    ("levy", &[0.05, 8192.0, 1.0], "1.312904202765232225668134949687265986997"),
    ("levy", &[0.1, 2097152.0, 1.0], "-73.76522779405030398348673202366888759754"),
    ("levy", &[0.3, 1000000.0, 2.5], "-50.21616073199929207624082005878554861275"),
    ("levy", &[0.9, 123457.0, 0.75], "-635.6821354820016031797564731606048152853"),
    ("levy", &[1.0, 1099511627776.0, 8.0], "-61564125.56322106229833090514712238629268"),
    ("thm1", &[0.1, 30.0, 64.0, 100.0], "-32239.25471840763185163336339536805414297"),
    ("thm1", &[0.05, 40.0, 128.0, 1000.0], "-9785797.624130392833139641249758250252615"),
    ("thm1", &[0.5, 24.0, 3.0, 1.0], "-14977.10199716771852911201280486129185672"),
    ("thm1", &[1.0, 60.0, 1024.0, 100000.0], "-4131498615663664.174364401218697267964934"),
    ("thm1", &[0.2, 12.0, 16.0, 7.0], "406.9834209024105747920018530715751248352"),
    ("sampling", &[0.1, 50.0, 64.0, 100.0, 5.0], "-39394799.45732892868015047317296171181379"),
    ("sampling", &[0.1, 40.0, 64.0, 10.0, 1.0], "-9849635.786312783236191658910912426856358"),
    ("sampling", &[0.7, 36.0, 8.0, 3.0, 4.0], "-471179.1396036291540543324866500224602694"),
    ("sampling", &[0.25, 62.0, 256.0, 2000.0, 10.0], "-984892940.0021074595926831809657448828618"),
    ("sampling", &[1.0, 20.0, 5.0, 1.0, 2.0], "-178.7273016361686041115762833454952483366"),
    ("thm2", &[0.1, 60.0, 64.0, 100.0, 35184372088832.0], "6238.316470577468378266959500979896991885"),
    ("thm2", &[0.3, 10.0, 64.0, 1.0, 64.0], "62.38323729163551306991500719673520130102"),
    ("thm2", &[1.0, 40.0, 16.0, 0.0, 1099511627776.0], "27.4690377630482990935455686702078604831"),
    ("thm2", &[0.5, 63.0, 3.0, 2.0, 1.152921504606847e+18], "99.88129810111559220077918195838328379084"),
    ("thm2", &[0.05, 20.0, 1000.0, 50.0, 999999.0], "3531.493135641764936624401092505114937002"),
    ("lemma_r", &[10.0, 1024.0, 2.0], "-78.40186152773388023916101211875156765258"),
    ("lemma_r", &[12.0, 4096.0, 8.0], "2.984432833386010379673452124164785483573"),
    ("lemma_r", &[20.0, 1000000.0, 5.0], "-10402.80372305546776047832202423750313531"),
    ("lemma_r", &[40.0, 1099511627776.0, 26.0], "-5433.60744611093552095664404847500627061"),
    ("lemma_r", &[8.0, 100.0, 3.0], "1.378510777812895808671190304998745877937"),
    ("hoeffding", &[0.1, 256.0], "-4.426852819440054690582767878541823431924"),
    ("hoeffding", &[0.05, 10000.0], "-49.30685281944005469058276787854182343192"),
    ("hoeffding", &[0.5, 3.0], "-0.8068528194400546905827678785418234319245"),
    ("hoeffding", &[1.0, 1.0], "-1.306852819440054690582767878541823431924"),
    ("hoeffding", &[0.01, 10000000.0], "-1999.306852819440054690582767878541823432"),
];
